"""Cross-validation driver, MAE/RMSE metrics, threshold sweeps, and
explicit-vs-implicit trust comparisons, with CSV reporting."""

from __future__ import annotations

import concurrent.futures
import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from helltrust.datasets import (
    FoldAssignment,
    RatingDataset,
    TrustEdgeList,
    kfold_split,
)
from helltrust.models import ModelSpec, build_predictor
from helltrust.seeding import derive_seed
from helltrust.trust import extract_trust

FOLD_CSV_HEADER = ["model", "dataset", "trust_source", "fold", "mae", "rmse",
                   "n_test", "seconds"]
AGGREGATE_CSV_HEADER = ["model", "dataset", "trust_source", "mae_mean", "mae_se",
                        "rmse_mean", "rmse_se"]
SWEEP_CSV_HEADER = ["expected_degree", "threshold", "mae_mean", "rmse_mean"]
COMPARISON_CSV_HEADER = ["model", "dataset", "mae_explicit", "mae_implicit",
                         "rmse_explicit", "rmse_implicit"]


@dataclass
class TrustSource:
    """Where the social graph for a trust-aware model comes from."""

    kind: str  # "none" | "explicit" | "hellinger"
    edges: TrustEdgeList | None = None
    expected_degree: float | None = None
    sample_size: int | None = None

    @classmethod
    def none(cls) -> "TrustSource":
        return cls(kind="none")

    @classmethod
    def explicit(cls, edges: TrustEdgeList) -> "TrustSource":
        return cls(kind="explicit", edges=edges)

    @classmethod
    def hellinger(cls, expected_degree: float,
                  sample_size: int | None = None) -> "TrustSource":
        return cls(kind="hellinger", expected_degree=expected_degree,
                   sample_size=sample_size)

    @property
    def label(self) -> str:
        return self.kind


@dataclass
class FoldMetrics:
    fold: int
    mae: float
    rmse: float
    n_test: int
    seconds: float
    extraction: dict | None = None


@dataclass
class EvalReport:
    model: str
    dataset: str
    trust_source: str
    folds: list[FoldMetrics] = field(default_factory=list)

    @property
    def mae_mean(self) -> float:
        return float(np.mean([f.mae for f in self.folds]))

    @property
    def rmse_mean(self) -> float:
        return float(np.mean([f.rmse for f in self.folds]))

    def _se(self, values) -> float:
        if len(values) < 2:
            return 0.0
        return float(np.std(values, ddof=1) / math.sqrt(len(values)))

    @property
    def mae_se(self) -> float:
        return self._se([f.mae for f in self.folds])

    @property
    def rmse_se(self) -> float:
        return self._se([f.rmse for f in self.folds])


def evaluate(predictor, test) -> tuple[float, float]:
    """MAE and RMSE of the predictor over held-out rating records."""
    if isinstance(test, RatingDataset):
        users, items, ratings = test.users, test.items, test.ratings
    elif isinstance(test, tuple) and len(test) == 3:
        users, items, ratings = (np.asarray(a) for a in test)
    else:
        records = list(test)
        users = np.array([r.user for r in records], dtype=np.int64)
        items = np.array([r.item for r in records], dtype=np.int64)
        ratings = np.array([r.rating for r in records])
    if users.shape[0] == 0:
        raise ValueError("empty test set")
    preds = predictor.predict_many(users, items)
    resid = preds - ratings
    mae = float(np.mean(np.abs(resid)))
    rmse = float(np.sqrt(np.mean(resid * resid)))
    assert mae <= rmse + 1e-12, f"MAE {mae} exceeded RMSE {rmse}"
    return mae, rmse


def _resolve_trust(source: TrustSource, train_ds: RatingDataset,
                   seed: int) -> tuple[TrustEdgeList | None, dict | None]:
    if source.kind == "none":
        return None, None
    if source.kind == "explicit":
        if source.edges is None:
            raise ValueError("explicit trust source without an edge list")
        return source.edges, None
    if source.kind == "hellinger":
        if source.expected_degree is None:
            raise ValueError("hellinger trust source needs an expected degree")
        edges, diag = extract_trust(train_ds, source.expected_degree,
                                    sample_size=source.sample_size, seed=seed)
        return edges, diag
    raise ValueError(f"unknown trust source kind {source.kind!r}")


def _run_fold(ds: RatingDataset, spec: ModelSpec, folds: FoldAssignment,
              fold: int, source: TrustSource, seed: int) -> FoldMetrics:
    start = time.perf_counter()
    train_idx = folds.train_indices(fold)
    test_idx = folds.test_indices(fold)
    train_ds = ds.subset(train_idx)
    trust, diag = _resolve_trust(source, train_ds, derive_seed(seed, f"extract-fold{fold}"))
    model = build_predictor(spec, train_ds, trust,
                            seed=derive_seed(seed, f"train-fold{fold}"))
    mae, rmse = evaluate(model, (ds.users[test_idx], ds.items[test_idx],
                                 ds.ratings[test_idx]))
    return FoldMetrics(fold=fold, mae=mae, rmse=rmse, n_test=test_idx.shape[0],
                       seconds=time.perf_counter() - start, extraction=diag)


def cross_validate(ds: RatingDataset, spec: ModelSpec, k: int = 5, seed: int = 0,
                   trust_source: TrustSource | None = None,
                   folds: FoldAssignment | None = None, jobs: int = 1,
                   dataset_name: str | None = None) -> EvalReport:
    """k-fold evaluation; trust graphs are built from training folds only."""
    source = trust_source or TrustSource.none()
    if folds is None:
        folds = kfold_split(ds, k, seed)
    report = EvalReport(model=spec.label,
                        dataset=dataset_name if dataset_name is not None else ds.name,
                        trust_source=source.label)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_run_fold, ds, spec, folds, f, source, seed): f
                for f in range(folds.k)
            }
            results = {}
            for fut in concurrent.futures.as_completed(futures):
                f = futures[fut]
                try:
                    results[f] = fut.result()
                except Exception as e:
                    e.args = (f"fold {f}: {e}",)
                    raise
        report.folds = [results[f] for f in range(folds.k)]
    else:
        for f in range(folds.k):
            try:
                report.folds.append(_run_fold(ds, spec, folds, f, source, seed))
            except Exception as e:
                e.args = (f"fold {f}: {e}",)
                raise
    return report


@dataclass
class SweepPoint:
    expected_degree: float
    threshold: float
    mae_mean: float
    rmse_mean: float
    report: EvalReport | None = None
    error: str | None = None


DEFAULT_SWEEP_GRID = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0)


def threshold_sweep(ds: RatingDataset, expected_degrees, spec: ModelSpec,
                    k: int = 5, seed: int = 0, jobs: int = 1,
                    sample_size: int | None = None,
                    dataset_name: str | None = None) -> list[SweepPoint]:
    """One cross-validation per target degree, sharing a single fold split,
    so the points differ only in the extracted trust graph."""
    folds = kfold_split(ds, k, seed)
    points = []
    for edeg in expected_degrees:
        source = TrustSource.hellinger(edeg, sample_size=sample_size)
        try:
            report = cross_validate(ds, spec, k=k, seed=seed, trust_source=source,
                                    folds=folds, jobs=jobs, dataset_name=dataset_name)
        except Exception as e:  # record and keep sweeping
            points.append(SweepPoint(expected_degree=edeg, threshold=float("nan"),
                                     mae_mean=float("nan"), rmse_mean=float("nan"),
                                     error=str(e)))
            continue
        thresholds = [f.extraction["T"] for f in report.folds if f.extraction]
        points.append(SweepPoint(
            expected_degree=edeg,
            threshold=float(np.mean(thresholds)) if thresholds else float("nan"),
            mae_mean=report.mae_mean,
            rmse_mean=report.rmse_mean,
            report=report,
        ))
    return points


@dataclass
class TrustComparison:
    spec: ModelSpec
    explicit: EvalReport
    implicit: EvalReport


def compare_trust_sources(ds: RatingDataset, explicit: TrustEdgeList,
                          expected_degree: float, model_specs, k: int = 5,
                          seed: int = 0, jobs: int = 1,
                          sample_size: int | None = None,
                          dataset_name: str | None = None) -> list[TrustComparison]:
    """Paired runs (explicit vs extracted trust) on identical fold splits."""
    folds = kfold_split(ds, k, seed)
    results = []
    for spec in model_specs:
        rep_explicit = cross_validate(
            ds, spec, k=k, seed=seed, trust_source=TrustSource.explicit(explicit),
            folds=folds, jobs=jobs, dataset_name=dataset_name)
        rep_implicit = cross_validate(
            ds, spec, k=k, seed=seed,
            trust_source=TrustSource.hellinger(expected_degree, sample_size=sample_size),
            folds=folds, jobs=jobs, dataset_name=dataset_name)
        results.append(TrustComparison(spec=spec, explicit=rep_explicit,
                                       implicit=rep_implicit))
    return results


def format_comparison_table(comparisons: list[TrustComparison]) -> str:
    """Side-by-side text table, extracted-trust results in parentheses."""
    lines = [f"{'Algorithm':<16} {'MAE':<16} {'RMSE':<16}"]
    for c in comparisons:
        mae = f"{c.explicit.mae_mean:.3f}({c.implicit.mae_mean:.3f})"
        rmse = f"{c.explicit.rmse_mean:.3f}({c.implicit.rmse_mean:.3f})"
        lines.append(f"{c.spec.label:<16} {mae:<16} {rmse:<16}")
    return "\n".join(lines)


# --- CSV interfaces --------------------------------------------------------

def write_fold_csv(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FOLD_CSV_HEADER)
        for rep in reports:
            for f in rep.folds:
                writer.writerow([rep.model, rep.dataset, rep.trust_source, f.fold,
                                 f"{f.mae:.6f}", f"{f.rmse:.6f}", f.n_test,
                                 f"{f.seconds:.3f}"])


def write_aggregate_csv(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_CSV_HEADER)
        for rep in reports:
            writer.writerow([rep.model, rep.dataset, rep.trust_source,
                             f"{rep.mae_mean:.6f}", f"{rep.mae_se:.6f}",
                             f"{rep.rmse_mean:.6f}", f"{rep.rmse_se:.6f}"])


def write_sweep_csv(points: list[SweepPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for pt in points:
            writer.writerow([f"{pt.expected_degree:g}", f"{pt.threshold:.6f}",
                             f"{pt.mae_mean:.6f}", f"{pt.rmse_mean:.6f}"])


def write_comparison_csv(comparisons: list[TrustComparison], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_CSV_HEADER)
        for c in comparisons:
            writer.writerow([c.spec.label, c.explicit.dataset,
                             f"{c.explicit.mae_mean:.6f}", f"{c.implicit.mae_mean:.6f}",
                             f"{c.explicit.rmse_mean:.6f}", f"{c.implicit.rmse_mean:.6f}"])
