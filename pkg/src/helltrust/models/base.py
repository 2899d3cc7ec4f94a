"""Shared predictor interface: score, clamp to the rating scale, fall back."""

from __future__ import annotations

import numpy as np


class Predictor:
    """A trained rating predictor.

    Subclasses implement ``_score(u, j)`` returning an unclamped estimate;
    ``predict`` clamps it into the declared rating scale.  Trained predictors
    are immutable and safe for concurrent prediction.
    """

    scale_min: float
    scale_max: float

    def _score(self, u: int, j: int) -> float:
        raise NotImplementedError

    def predict(self, u: int, j: int) -> float:
        score = self._score(int(u), int(j))
        return min(max(score, self.scale_min), self.scale_max)

    def predict_many(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        out = np.empty(len(users))
        for k, (u, j) in enumerate(zip(users, items)):
            out[k] = self.predict(u, j)
        return out
