"""Rating predictors and the model registry used by experiment specs."""

from __future__ import annotations

from dataclasses import dataclass, field

from helltrust.datasets import RatingDataset, TrustEdgeList
from helltrust.models.base import Predictor
from helltrust.models.baselines import (
    MeanModel,
    SlopeOneModel,
    train_mean_model,
    train_slope_one,
)
from helltrust.models.knn import (
    KNNModel,
    SimilarityTable,
    pcc_similarity,
    train_knn,
)
from helltrust.models.factor import (
    DivergenceError,
    FactorModel,
    HyperParams,
    train_latent_factor,
    train_trust_svd,
    trust_gradients,
    trust_loss,
)

_FACTOR_PARAMS = {"factors", "max_iter", "learn_rate", "reg", "seed", "init_std"}

# model name -> (allowed params, needs trust edges)
MODEL_REGISTRY: dict[str, tuple[set, bool]] = {
    "globalavg": (set(), False),
    "useravg": (set(), False),
    "itemavg": (set(), False),
    "slopeone": (set(), False),
    "userknn": ({"neighbors", "shrinkage", "similarity"}, False),
    "itemknn": ({"neighbors", "shrinkage", "similarity"}, False),
    "regsvd": (set(_FACTOR_PARAMS), False),
    "biasedmf": (set(_FACTOR_PARAMS), False),
    "svdpp": (set(_FACTOR_PARAMS), False),
    "trustsvd": (_FACTOR_PARAMS | {"reg_social"}, True),
    "helltrustsvd": (_FACTOR_PARAMS | {"reg_social"}, True),
}

_CANONICAL_NAMES = {
    "globalavg": "GlobalAvg", "useravg": "UserAvg", "itemavg": "ItemAvg",
    "slopeone": "SlopeOne", "userknn": "UserKNN", "itemknn": "ItemKNN",
    "regsvd": "RegSVD", "biasedmf": "BiasedMF", "svdpp": "SVD++",
    "trustsvd": "TrustSVD", "helltrustsvd": "HellTrustSVD",
}


@dataclass
class ModelSpec:
    """A model name plus its hyperparameters, validated before any training."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        key = self.name.replace("+", "p").replace("-", "").replace("_", "").lower()
        if key not in MODEL_REGISTRY:
            raise ValueError(
                f"unknown model {self.name!r}; known: {sorted(_CANONICAL_NAMES.values())}"
            )
        self.key = key
        allowed, self.needs_trust = MODEL_REGISTRY[key]
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(
                f"model {self.label} does not accept parameters {sorted(unknown)}"
            )
        sim = self.params.get("similarity", "pcc")
        if str(sim).lower() != "pcc":
            raise ValueError(f"only PCC similarity is supported, got {sim!r}")

    @property
    def label(self) -> str:
        return _CANONICAL_NAMES[self.key]

    def hyper_params(self, seed: int | None = None) -> HyperParams:
        params = {k: v for k, v in self.params.items() if k in _FACTOR_PARAMS | {"reg_social"}}
        if seed is not None and "seed" not in params:
            params["seed"] = seed
        return HyperParams(**params)


def build_predictor(spec: ModelSpec, train: RatingDataset,
                    trust: TrustEdgeList | None = None,
                    seed: int | None = None) -> Predictor:
    """Train the predictor described by spec on the given training data."""
    key = spec.key
    if key in ("globalavg", "useravg", "itemavg"):
        return train_mean_model(train, key[: -len("avg")])
    if key == "slopeone":
        return train_slope_one(train)
    if key in ("userknn", "itemknn"):
        return train_knn(
            train,
            mode=key[: -len("knn")],
            neighbors=int(spec.params.get("neighbors", 50)),
            shrinkage=int(spec.params.get("shrinkage", 30)),
        )
    hp = spec.hyper_params(seed)
    if key in ("regsvd", "biasedmf", "svdpp"):
        return train_latent_factor(train, hp, key)
    edges = trust if trust is not None else TrustEdgeList.empty(train.n_users)
    return train_trust_svd(train, edges, hp)
