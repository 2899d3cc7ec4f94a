"""Command-line entry point: dataset stats, trust extraction, experiments.

Commands:
  stats    print dataset (and optional trust) statistics
  extract  build an implicit trust edge file from a ratings file
  run      cross-validate models, sweep the density target, or compare
           explicit vs extracted trust; writes CSVs and figures

Exit codes: 0 ok, 2 input/config error, 3 extraction degeneracy,
4 training divergence.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field

from helltrust import report as figures
from helltrust.datasets import (
    ParseError,
    RatingDataset,
    TrustEdgeList,
    dataset_stats,
    parse_ratings,
    parse_trust,
)
from helltrust.evaluation import (
    DEFAULT_SWEEP_GRID,
    TrustSource,
    compare_trust_sources,
    cross_validate,
    format_comparison_table,
    threshold_sweep,
    write_aggregate_csv,
    write_comparison_csv,
    write_fold_csv,
    write_sweep_csv,
)
from helltrust.models import MODEL_REGISTRY, ModelSpec, DivergenceError
from helltrust.trust import ExtractionError, extract_trust, format_diagnostics

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EXTRACTION = 3
EXIT_DIVERGENCE = 4

# Per-dataset rating scales and factor-model regularization defaults.
DATASET_PRESETS = {
    "filmtrust": {"scale": (0.5, 4.0), "reg": 0.1, "reg_social": 0.9},
    "ml-100k": {"scale": (1.0, 5.0), "reg": 0.1, "reg_social": 0.5},
    "ml-1m": {"scale": (1.0, 5.0), "reg": 0.1, "reg_social": 0.5},
    "ciao": {"scale": (1.0, 5.0), "reg": 0.5, "reg_social": 1.0},
    "epinions": {"scale": (1.0, 5.0), "reg": 0.6, "reg_social": 0.5},
}

# Density-sweep training configuration (small, fast, fixed).
SWEEP_MODEL_DEFAULTS = {"factors": 5, "max_iter": 50, "learn_rate": 0.005, "reg": 0.5}

# Config-file keys use the experiment-table vocabulary; map to parameter names.
_PARAM_KEYS = {
    "factors": "factors",
    "max.iter": "max_iter",
    "learn.rate": "learn_rate",
    "reg": "reg",
    "reg.social": "reg_social",
    "similarity": "similarity",
    "shrinkage": "shrinkage",
    "neighbors": "neighbors",
    "seed": "seed",
    "init.std": "init_std",
}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description; validated before any work."""

    ratings_path: str
    scale: tuple[float, float]
    dataset: str = ""
    trust_path: str | None = None
    models: list[ModelSpec] = field(default_factory=list)
    mode: str = "cv"
    trust_source: str = "none"
    expected_degree: float | None = None
    sample_size: int | None = None
    sweep_grid: tuple = DEFAULT_SWEEP_GRID
    folds: int = 5
    seed: int = 0
    jobs: int = 1
    out_dir: str = "results"

    def validate(self) -> None:
        if not os.path.exists(self.ratings_path):
            raise ParseError(f"ratings file not found: {self.ratings_path}")
        if self.trust_path is not None and not os.path.exists(self.trust_path):
            raise ParseError(f"trust file not found: {self.trust_path}")
        if self.mode not in ("cv", "sweep", "compare"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trust_source not in ("none", "explicit", "hellinger"):
            raise ValueError(f"unknown trust source {self.trust_source!r}")
        if self.trust_source == "explicit" and self.trust_path is None:
            raise ValueError("explicit trust source requires a trust file")
        if self.trust_source == "hellinger" and self.expected_degree is None:
            raise ValueError("hellinger trust source requires --expected-degree")
        if self.mode == "compare" and self.trust_path is None:
            raise ValueError("compare mode requires a trust file")
        if self.mode == "compare" and self.expected_degree is None:
            raise ValueError("compare mode requires --expected-degree")
        if self.mode == "sweep" and not self.sweep_grid:
            raise ValueError("sweep mode requires a non-empty grid")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if not self.models:
            raise ValueError("no models specified (use --model or a config file)")
        if self.mode in ("sweep", "compare"):
            missing = [s.label for s in self.models if not s.needs_trust]
            if missing:
                raise ValueError(
                    f"{self.mode} mode needs trust-aware models, got {missing}"
                )


def _parse_number(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


def _model_params(items) -> dict:
    params = {}
    for key, value in items:
        if key not in _PARAM_KEYS:
            raise ValueError(f"unknown model parameter {key!r}")
        params[_PARAM_KEYS[key]] = _parse_number(value)
    return params


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ParseError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    parser.read(path, encoding="utf-8")
    if "experiment" not in parser:
        raise ValueError(f"config {path} has no [experiment] section")
    exp = parser["experiment"]
    dataset = exp.get("dataset", "")
    preset = DATASET_PRESETS.get(dataset.lower(), {})
    scale_min = exp.getfloat("scale.min", fallback=preset.get("scale", (None, None))[0])
    scale_max = exp.getfloat("scale.max", fallback=preset.get("scale", (None, None))[1])
    if scale_min is None or scale_max is None:
        raise ValueError("config must give scale.min/scale.max or a known dataset name")
    grid = exp.get("sweep.grid", "")
    sweep_grid = tuple(float(v) for v in grid.replace(",", " ").split()) if grid \
        else DEFAULT_SWEEP_GRID
    models = []
    for section in parser.sections():
        if section.startswith("model:"):
            name = section.split(":", 1)[1].strip()
            models.append(ModelSpec(name, _model_params(parser[section].items())))
    cfg = ExperimentConfig(
        ratings_path=exp.get("ratings", ""),
        scale=(scale_min, scale_max),
        dataset=dataset,
        trust_path=exp.get("trust", fallback=None),
        models=models,
        mode=exp.get("mode", "cv"),
        trust_source=exp.get("trust.source", "none"),
        expected_degree=exp.getfloat("expected.degree", fallback=None),
        sample_size=exp.getint("sample.size", fallback=None),
        sweep_grid=sweep_grid,
        folds=exp.getint("folds", 5),
        seed=exp.getint("seed", 0),
        jobs=exp.getint("jobs", 1),
        out_dir=exp.get("out.dir", "results"),
    )
    return cfg


def _scale_from_args(args) -> tuple[float, float]:
    preset = DATASET_PRESETS.get((args.dataset or "").lower())
    scale_min = args.scale_min if args.scale_min is not None else (
        preset["scale"][0] if preset else None)
    scale_max = args.scale_max if args.scale_max is not None else (
        preset["scale"][1] if preset else None)
    if scale_min is None or scale_max is None:
        raise ValueError(
            "rating scale unknown: pass --scale-min/--scale-max or a known --dataset"
        )
    return scale_min, scale_max


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        preset = DATASET_PRESETS.get((args.dataset or "").lower(), {})
        shared = {}
        for flag, param in (("factors", "factors"), ("iters", "max_iter"),
                            ("lr", "learn_rate"), ("reg", "reg"),
                            ("reg_social", "reg_social")):
            value = getattr(args, flag)
            if value is not None:
                shared[param] = value
        models = []
        for name in args.model or []:
            probe = ModelSpec(name)  # validates the name
            allowed, needs_trust = MODEL_REGISTRY[probe.key]
            params = {k: v for k, v in shared.items() if k in allowed}
            if needs_trust:
                params.setdefault("reg", preset.get("reg", 0.1))
                params.setdefault("reg_social", preset.get("reg_social", 0.5))
            models.append(ModelSpec(name, params))
        if not models and args.mode == "sweep":
            params = dict(SWEEP_MODEL_DEFAULTS)
            params["reg_social"] = preset.get("reg_social", 0.9)
            models = [ModelSpec("HellTrustSVD", params)]
        if not models and args.mode == "compare":
            params = {"factors": 5, "max_iter": 100, "learn_rate": 0.005,
                      "reg": preset.get("reg", 0.1),
                      "reg_social": preset.get("reg_social", 0.5)}
            models = [ModelSpec("TrustSVD", params)]
        cfg = ExperimentConfig(
            ratings_path=args.ratings,
            scale=_scale_from_args(args),
            dataset=args.dataset or "",
            trust_path=args.trust,
            models=models,
            mode=args.mode,
            trust_source=args.trust_source,
            expected_degree=args.expected_degree,
            sample_size=args.sample,
            sweep_grid=tuple(args.sweep_grid) if args.sweep_grid else DEFAULT_SWEEP_GRID,
            folds=args.folds,
            seed=args.seed,
            jobs=args.jobs,
            out_dir=args.out_dir,
        )
    # Models that can use trust but run without it fall back to none-source.
    if cfg.trust_source == "none" and any(s.key == "helltrustsvd" for s in cfg.models):
        if cfg.expected_degree is None:
            cfg.expected_degree = 10.0
        cfg.trust_source = "hellinger"
    cfg.validate()
    return cfg


def cmd_stats(args) -> int:
    scale = _scale_from_args(args)
    ds = parse_ratings(args.ratings, *scale, name=args.dataset or "")
    stats = dataset_stats(ds)
    trust = None
    if args.trust:
        trust = parse_trust(args.trust, ds)
    if args.csv:
        print("dataset,N,M,ratings,density,mean")
        print(f"{args.dataset or args.ratings},{stats.n_users},{stats.n_items},"
              f"{stats.rating_count},{stats.density:.6f},{stats.mean_rating:.6f}")
        return EXIT_OK
    print(f"dataset={args.dataset or args.ratings}")
    print(f"users={stats.n_users}")
    print(f"items={stats.n_items}")
    print(f"ratings={stats.rating_count}")
    print(f"density={100 * stats.density:.2f}%")
    print(f"mean_rating={stats.mean_rating:.4f}")
    if ds.duplicate_count:
        print(f"duplicate_lines={ds.duplicate_count}")
    if trust is not None:
        n = ds.n_users
        full_density = trust.n_edges / (n * (n - 1)) if n > 1 else 0.0
        trusters = int((trust.out_degree > 0).sum())
        trustees = int((trust.in_degree > 0).sum())
        active = trust.n_edges / (trusters * trustees) if trusters and trustees else 0.0
        print(f"trust_edges={trust.n_edges}")
        print(f"trust_density={100 * full_density:.4f}%")
        print(f"trust_density_active={100 * active:.4f}%")
        dropped = trust.dropped_unknown + trust.dropped_self + trust.dropped_duplicate
        if dropped:
            print(f"trust_dropped={dropped} (unknown={trust.dropped_unknown} "
                  f"self={trust.dropped_self} duplicate={trust.dropped_duplicate})")
    return EXIT_OK


def cmd_extract(args) -> int:
    scale = _scale_from_args(args)
    ds = parse_ratings(args.ratings, *scale, name=args.dataset or "")
    edges, diag = extract_trust(ds, args.expected_degree,
                                sample_size=args.sample, seed=args.seed)
    edges.write(args.out, ds.user_raw_ids)
    print(format_diagnostics(diag))
    print(f"wrote {edges.n_edges} directed edges to {args.out}")
    return EXIT_OK


def _print_report(rep) -> None:
    print(f"model={rep.model} trust={rep.trust_source} "
          f"mae={rep.mae_mean:.4f}({rep.mae_se:.4f}) "
          f"rmse={rep.rmse_mean:.4f}({rep.rmse_se:.4f})")


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    ds = parse_ratings(cfg.ratings_path, *cfg.scale, name=cfg.dataset)
    explicit = parse_trust(cfg.trust_path, ds) if cfg.trust_path else None
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.mode == "sweep":
        points = threshold_sweep(ds, cfg.sweep_grid, cfg.models[0], k=cfg.folds,
                                 seed=cfg.seed, jobs=cfg.jobs,
                                 sample_size=cfg.sample_size,
                                 dataset_name=cfg.dataset)
        write_sweep_csv(points, os.path.join(cfg.out_dir, "sweep.csv"))
        figures.plot_sweep(points, os.path.join(cfg.out_dir, "sweep.png"))
        for pt in points:
            status = f"error={pt.error}" if pt.error else (
                f"T={pt.threshold:.4f} mae={pt.mae_mean:.4f} rmse={pt.rmse_mean:.4f}")
            print(f"expected_degree={pt.expected_degree:g} {status}")
        return EXIT_OK
    if cfg.mode == "compare":
        comparisons = compare_trust_sources(
            ds, explicit, cfg.expected_degree, cfg.models, k=cfg.folds,
            seed=cfg.seed, jobs=cfg.jobs, sample_size=cfg.sample_size,
            dataset_name=cfg.dataset)
        write_comparison_csv(comparisons, os.path.join(cfg.out_dir, "comparison.csv"))
        reports = [r for c in comparisons for r in (c.explicit, c.implicit)]
        write_fold_csv(reports, os.path.join(cfg.out_dir, "folds.csv"))
        figures.plot_comparison(comparisons, os.path.join(cfg.out_dir, "comparison.png"))
        print(format_comparison_table(comparisons))
        return EXIT_OK
    # cv mode
    reports = []
    for spec in cfg.models:
        if spec.needs_trust:
            if cfg.trust_source == "explicit":
                source = TrustSource.explicit(explicit)
            elif cfg.trust_source == "hellinger":
                source = TrustSource.hellinger(cfg.expected_degree,
                                               sample_size=cfg.sample_size)
            else:
                source = TrustSource.none()
        else:
            source = TrustSource.none()
        rep = cross_validate(ds, spec, k=cfg.folds, seed=cfg.seed,
                             trust_source=source, jobs=cfg.jobs,
                             dataset_name=cfg.dataset)
        _print_report(rep)
        reports.append(rep)
    write_fold_csv(reports, os.path.join(cfg.out_dir, "folds.csv"))
    write_aggregate_csv(reports, os.path.join(cfg.out_dir, "aggregate.csv"))
    figures.plot_aggregate(reports, os.path.join(cfg.out_dir, "aggregate.png"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helltrust",
        description="Rating prediction with implicit social trust extracted "
                    "from the bipartite rating graph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_flags(p):
        p.add_argument("--ratings", required=True, help="ratings file (user item rating)")
        p.add_argument("--dataset", default="",
                       help=f"dataset preset name ({', '.join(DATASET_PRESETS)})")
        p.add_argument("--scale-min", type=float, default=None, help="minimum rating")
        p.add_argument("--scale-max", type=float, default=None, help="maximum rating")

    p_stats = sub.add_parser("stats", help="print dataset statistics")
    add_data_flags(p_stats)
    p_stats.add_argument("--trust", default=None, help="optional trust file")
    p_stats.add_argument("--csv", action="store_true", help="emit a CSV row instead")
    p_stats.set_defaults(func=cmd_stats)

    p_extract = sub.add_parser("extract", help="extract an implicit trust edge file")
    add_data_flags(p_extract)
    p_extract.add_argument("--expected-degree", type=float, required=True,
                           help="target mean degree of the extracted graph")
    p_extract.add_argument("--sample", type=int, default=None,
                           help="number of sampled pairs for the distance fit")
    p_extract.add_argument("--seed", type=int, default=0)
    p_extract.add_argument("--out", default="trust_edges.txt", help="output edge file")
    p_extract.set_defaults(func=cmd_extract)

    p_run = sub.add_parser("run", help="run a cross-validation experiment")
    p_run.add_argument("--config", default=None, help="experiment config file (INI)")
    p_run.add_argument("--ratings", default=None)
    p_run.add_argument("--dataset", default="")
    p_run.add_argument("--scale-min", type=float, default=None)
    p_run.add_argument("--scale-max", type=float, default=None)
    p_run.add_argument("--trust", default=None, help="explicit trust file")
    p_run.add_argument("--model", action="append", default=None,
                       help="model name; repeat for several")
    p_run.add_argument("--factors", type=int, default=None)
    p_run.add_argument("--iters", type=int, default=None)
    p_run.add_argument("--lr", type=float, default=None)
    p_run.add_argument("--reg", type=float, default=None)
    p_run.add_argument("--reg-social", dest="reg_social", type=float, default=None)
    p_run.add_argument("--folds", type=int, default=5)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--trust-source", choices=("none", "explicit", "hellinger"),
                       default="none")
    p_run.add_argument("--expected-degree", type=float, default=None)
    p_run.add_argument("--sample", type=int, default=None)
    p_run.add_argument("--mode", choices=("cv", "sweep", "compare"), default="cv")
    p_run.add_argument("--sweep-grid", type=float, nargs="+", default=None)
    p_run.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_run.add_argument("--out-dir", default="results")
    p_run.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.config and not args.ratings:
        print("error: run needs --config or --ratings", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ExtractionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EXTRACTION
    except (ParseError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
