"""Batch experiment harness and command-line entry point.

Loads a JSON experiment config (scenario, filters, metric, run count),
executes a seeded Monte Carlo campaign in which every configured filter
consumes the identical per-run measurement sequences, and writes per-step
metric CSVs, a summary table, a cardinality trace, and run metadata.

Determinism contract: (config, seed) fully determines every CSV byte.
Randomness is drawn from per-(seed, run, purpose) substreams, so results
do not depend on the number of worker processes.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from .errors import ConfigError, TrajPhdError
from .filters import (
    BirthModel,
    ClutterModel,
    Rectangle,
    ReductionConfig,
    TaggedState,
    TcphdState,
    TphdState,
    tagged_cphd_step,
    tagged_phd_step,
    tcphd_step,
    tphd_step,
)
from .metrics import MetricConfig, ospa, rms_over_runs, rms_over_time, trajectory_metric
from .scenario import (
    ScenarioConfig,
    ScriptedTrajectory,
    cv_models,
    generate_measurement_sequence,
    generate_truth,
)
from .trajgauss import LinearModels

__all__ = [
    "FilterSpec",
    "ExperimentConfig",
    "RunRecord",
    "load_config",
    "default_config_path",
    "run_experiment",
    "emit_cardinality_trace",
    "main",
]

_FILTER_KINDS = ("tphd", "tcphd", "tagged-phd", "tagged-cphd")
_TRAJECTORY_KINDS = ("tphd", "tcphd")


@dataclass(frozen=True)
class FilterSpec:
    """One filter column of the campaign: kind plus reduction parameters."""

    kind: str
    reduction: ReductionConfig

    def __post_init__(self):
        if self.kind not in _FILTER_KINDS:
            raise ConfigError(f"unknown filter kind: {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind in _TRAJECTORY_KINDS:
            return f"{self.kind}_L{self.reduction.lscan}"
        return self.kind


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved campaign: scenario, filters, metric, runs, output."""

    scenario: ScenarioConfig
    filters: tuple
    metric: MetricConfig
    n_runs: int
    output: str

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if not self.filters:
            raise ConfigError("at least one filter is required")
        labels = [s.label for s in self.filters]
        if len(set(labels)) != len(labels):
            raise ConfigError("filter/L combinations must be distinct")


class FilterTrace(NamedTuple):
    """Per-step scores of one filter on one run; arrays of length n_steps."""

    tm2: np.ndarray        # squared trajectory-metric totals
    loc2: np.ndarray
    missed2: np.ndarray
    false2: np.ndarray
    switch2: np.ndarray
    ospa2: np.ndarray
    n_hat: np.ndarray
    gospa_gap: float       # max |total - root of summed per-step GOSPA^p|


@dataclass(frozen=True)
class RunRecord:
    """Scores of every filter on one Monte Carlo run."""

    run: int
    seed: int
    traces: dict
    wall_time: float

    def __post_init__(self):
        if self.wall_time < 0.0:
            raise ConfigError("wall_time must be nonnegative")


# ---------------------------------------------------------------------------
# Config parsing


def default_config_path() -> Path:
    """Path of the benchmark config shipped with the package."""
    return Path(__file__).parent / "data" / "benchmark.json"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _parse_models(raw: dict) -> LinearModels:
    if "F" in raw:
        return LinearModels(
            F=np.asarray(_require(raw, "F", "models"), dtype=float),
            Q=np.asarray(_require(raw, "Q", "models"), dtype=float),
            H=np.asarray(_require(raw, "H", "models"), dtype=float),
            R=np.asarray(_require(raw, "R", "models"), dtype=float),
            p_S=float(_require(raw, "survival_probability", "models")),
            p_D=float(_require(raw, "detection_probability", "models")),
        )
    return cv_models(
        sampling_period=float(_require(raw, "sampling_period", "models")),
        process_noise=float(_require(raw, "process_noise", "models")),
        survival_probability=float(_require(raw, "survival_probability", "models")),
        detection_probability=float(_require(raw, "detection_probability", "models")),
        measurement_noise_variance=float(
            _require(raw, "measurement_noise_variance", "models")
        ),
    )


def _parse_birth(raw: dict) -> BirthModel:
    weights = np.asarray(_require(raw, "weights", "birth"), dtype=float)
    means = np.asarray(_require(raw, "means", "birth"), dtype=float)
    if "covs" in raw:
        covs = np.asarray(raw["covs"], dtype=float)
    elif "cov_diag" in raw:
        covs = np.broadcast_to(
            np.diag(np.asarray(raw["cov_diag"], dtype=float)),
            (weights.size, means.shape[1], means.shape[1]),
        ).copy()
    else:
        raise ConfigError("birth needs either 'covs' or 'cov_diag'")
    return BirthModel(weights=weights, means=means, covs=covs)


def _parse_script(raw, n_steps: int):
    if raw is None or raw == "sample":
        return None
    script = []
    for entry in raw:
        kwargs = {
            "birth_time": int(_require(entry, "birth", "script entry")),
            "death_time": int(_require(entry, "death", "script entry")),
        }
        if "state" in entry:
            kwargs["initial_state"] = np.asarray(entry["state"], dtype=float)
        else:
            kwargs["birth_component"] = int(
                _require(entry, "component", "script entry")
            )
        script.append(ScriptedTrajectory(**kwargs))
    return tuple(script)


def _parse_scenario(raw: dict) -> ScenarioConfig:
    region_raw = _require(raw, "region", "scenario")
    region = Rectangle(
        lo=np.asarray(_require(region_raw, "lo", "region"), dtype=float),
        hi=np.asarray(_require(region_raw, "hi", "region"), dtype=float),
    )
    clutter = ClutterModel(
        rate=float(_require(raw, "clutter_rate", "scenario")), region=region
    )
    n_steps = int(_require(raw, "n_steps", "scenario"))
    return ScenarioConfig(
        n_steps=n_steps,
        models=_parse_models(_require(raw, "models", "scenario")),
        birth=_parse_birth(_require(raw, "birth", "scenario")),
        clutter=clutter,
        script=_parse_script(raw.get("script"), n_steps),
        seed=int(raw.get("seed", 0)),
    )


def _parse_metric(raw: dict) -> MetricConfig:
    kwargs = {}
    for src, dst in (
        ("order", "order"),
        ("cutoff", "cutoff"),
        ("switch_penalty", "switch_penalty"),
        ("alpha", "alpha"),
    ):
        if src in raw:
            kwargs[dst] = float(raw[src])
    if "position_dims" in raw:
        dims = raw["position_dims"]
        kwargs["position_dims"] = None if dims is None else tuple(int(d) for d in dims)
    return MetricConfig(**kwargs)


def _expand_filters(raw_filters) -> tuple:
    specs = []
    for entry in raw_filters:
        kind = _require(entry, "kind", "filter entry")
        base = dict(
            prune_threshold=float(entry.get("prune_threshold", 1e-4)),
            absorb_threshold=float(entry.get("absorb_threshold", 4.0)),
            max_components=int(entry.get("max_components", 30)),
        )
        lscan = entry.get("lscan", 1)
        lscans = [int(v) for v in (lscan if isinstance(lscan, list) else [lscan])]
        if kind not in _TRAJECTORY_KINDS:
            lscans = [1]
        for L in lscans:
            specs.append(
                FilterSpec(kind=kind, reduction=ReductionConfig(lscan=L, **base))
            )
    return tuple(specs)


def _build_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    overrides = overrides or {}
    raw_filters = list(_require(raw, "filters", "config"))
    if overrides.get("filters") is not None:
        wanted = overrides["filters"]
        unknown = set(wanted) - set(_FILTER_KINDS)
        if unknown:
            raise ConfigError(f"unknown filter kinds: {sorted(unknown)}")
        raw_filters = [e for e in raw_filters if e.get("kind") in wanted]
    if overrides.get("lscan") is not None:
        raw_filters = [
            {**e, "lscan": list(overrides["lscan"])}
            if e.get("kind") in _TRAJECTORY_KINDS
            else e
            for e in raw_filters
        ]
    scenario = _parse_scenario(_require(raw, "scenario", "config"))
    if overrides.get("seed") is not None:
        scenario = replace(scenario, seed=int(overrides["seed"]))
    n_runs = int(raw.get("n_runs", 1))
    if overrides.get("runs") is not None:
        n_runs = int(overrides["runs"])
    output = str(raw.get("output", "results"))
    if overrides.get("out") is not None:
        output = str(overrides["out"])
    return ExperimentConfig(
        scenario=scenario,
        filters=_expand_filters(raw_filters),
        metric=_parse_metric(raw.get("metric", {})),
        n_runs=n_runs,
        output=output,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a JSON experiment config file into an ExperimentConfig."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return _build_config(raw, overrides)


# ---------------------------------------------------------------------------
# Campaign execution


def _slice_positions(states: np.ndarray, metric: MetricConfig) -> np.ndarray:
    if states.size == 0 or metric.position_dims is None:
        return states
    return states[:, list(metric.position_dims)]


def _run_filter(spec: FilterSpec, truth, measurements, scenario, metric):
    models, birth, clutter = scenario.models, scenario.birth, scenario.clutter
    n_steps = scenario.n_steps
    red = spec.reduction
    if spec.kind == "tphd":
        state = TphdState.initial()
    elif spec.kind == "tcphd":
        state = TcphdState.initial()
    else:
        state = TaggedState.initial(
            models.n_x, with_cardinality=spec.kind == "tagged-cphd"
        )
    tm2 = np.zeros(n_steps)
    loc2 = np.zeros(n_steps)
    missed2 = np.zeros(n_steps)
    false2 = np.zeros(n_steps)
    switch2 = np.zeros(n_steps)
    ospa2 = np.zeros(n_steps)
    n_hat = np.zeros(n_steps)
    gospa_gap = 0.0
    for k, Z in enumerate(measurements, start=1):
        if spec.kind == "tphd":
            state, est = tphd_step(state, Z, models, birth, clutter, red)
        elif spec.kind == "tcphd":
            state, est = tcphd_step(state, Z, models, birth, clutter, red)
        elif spec.kind == "tagged-phd":
            state, est = tagged_phd_step(state, Z, models, birth, clutter, red)
        else:
            state, est = tagged_cphd_step(state, Z, models, birth, clutter, red)
        br = trajectory_metric(truth, est, metric, k)
        i = k - 1
        tm2[i] = br.total**metric.order
        loc2[i], missed2[i], false2[i], switch2[i] = (
            br.loc2,
            br.missed2,
            br.false2,
            br.switch2,
        )
        gospa_root = sum(br.stepwise_gospa2) ** (1.0 / metric.order)
        gospa_gap = max(gospa_gap, abs(br.total - gospa_root))
        truth_pos = _slice_positions(truth.states_at(k), metric)
        est_pos = _slice_positions(est.states_at(k), metric)
        ospa2[i] = ospa(truth_pos, est_pos, metric) ** metric.order
        n_hat[i] = len(est)
    return FilterTrace(
        tm2, loc2, missed2, false2, switch2, ospa2, n_hat, gospa_gap
    )


def _run_single(config: ExperimentConfig, run: int) -> RunRecord:
    scenario = config.scenario
    start = time.perf_counter()
    truth = generate_truth(scenario, run=run)
    measurements = generate_measurement_sequence(truth, scenario, run=run)
    traces = {}
    for spec in config.filters:
        try:
            traces[spec.label] = _run_filter(
                spec, truth, measurements, scenario, config.metric
            )
        except TrajPhdError as e:
            raise type(e)(f"run {run}, filter {spec.label}: {e}") from e
    return RunRecord(
        run=run,
        seed=scenario.seed,
        traces=traces,
        wall_time=time.perf_counter() - start,
    )


_WORKER_CONFIG = None


def _init_worker(config):
    global _WORKER_CONFIG
    _WORKER_CONFIG = config


def _worker(run: int) -> RunRecord:
    return _run_single(_WORKER_CONFIG, run)


def _collect_records(config: ExperimentConfig, jobs: int = 1) -> list:
    runs = list(range(config.n_runs))
    if jobs <= 1:
        return [_run_single(config, r) for r in runs]
    with multiprocessing.get_context("spawn").Pool(
        processes=jobs, initializer=_init_worker, initargs=(config,)
    ) as pool:
        return pool.map(_worker, runs, chunksize=1)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _aggregate(config: ExperimentConfig, records: list) -> dict:
    """Per-filter RMS error curves and scenario-wide totals."""
    n_steps = config.scenario.n_steps
    ks = np.arange(1, n_steps + 1)
    out = {}
    names = (
        ("d", "tm2"),
        ("loc", "loc2"),
        ("missed", "missed2"),
        ("false", "false2"),
        ("switch", "switch2"),
    )
    for spec in config.filters:
        traces = [r.traces[spec.label] for r in records]
        curves = {}
        for out_name, attr in names:
            stacked = np.stack([getattr(t, attr) for t in traces])
            curves[out_name] = np.array(
                [rms_over_runs(stacked[:, i], int(ks[i])) for i in range(n_steps)]
            )
        # OSPA is a per-step distance; no window normalization applies.
        ospa_stacked = np.stack([t.ospa2 for t in traces])
        curves["ospa"] = np.sqrt(ospa_stacked.mean(axis=0))
        curves["n_hat"] = np.stack([t.n_hat for t in traces]).mean(axis=0)
        out[spec.label] = {
            "curves": curves,
            "d_T": rms_over_time(curves["d"]),
            "loc_T": rms_over_time(curves["loc"]),
            "missed_T": rms_over_time(curves["missed"]),
            "false_T": rms_over_time(curves["false"]),
            "switch_T": rms_over_time(curves["switch"]),
            "ospa_T": rms_over_time(curves["ospa"]),
            "gospa_gap": max(t.gospa_gap for t in traces),
        }
    return out


def _write_csvs(config: ExperimentConfig, summary: dict, out_dir: Path):
    n_steps = config.scenario.n_steps
    for spec in config.filters:
        curves = summary[spec.label]["curves"]
        lines = ["k,d,loc,missed,false,switch,n_hat"]
        for i in range(n_steps):
            lines.append(
                ",".join(
                    [str(i + 1)]
                    + [
                        _fmt(curves[name][i])
                        for name in ("d", "loc", "missed", "false", "switch")
                    ]
                    + [_fmt(curves["n_hat"][i])]
                )
            )
        (out_dir / f"{spec.label}.csv").write_text("\n".join(lines) + "\n")
    lines = ["filter,lscan,d_T,loc_T,missed_T,false_T,switch_T,ospa_T"]
    for spec in config.filters:
        s = summary[spec.label]
        lines.append(
            ",".join(
                [spec.kind, str(spec.reduction.lscan)]
                + [
                    _fmt(s[key])
                    for key in (
                        "d_T",
                        "loc_T",
                        "missed_T",
                        "false_T",
                        "switch_T",
                        "ospa_T",
                    )
                ]
            )
        )
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")


def _write_cardinality(config: ExperimentConfig, summary: dict, out_dir: Path):
    labels = [spec.label for spec in config.filters]
    lines = [",".join(["k"] + labels)]
    for i in range(config.scenario.n_steps):
        lines.append(
            ",".join(
                [str(i + 1)]
                + [_fmt(summary[label]["curves"]["n_hat"][i]) for label in labels]
            )
        )
    (out_dir / "cardinality.csv").write_text("\n".join(lines) + "\n")


def run_experiment(
    config: ExperimentConfig, jobs: int = 1, records: list | None = None
) -> dict:
    """Execute the campaign and write CSVs, summary, trace, and metadata.

    Returns the summary dict: label -> aggregated totals plus per-step
    curves. ``records`` short-circuits execution with precomputed runs
    (used to emit additional artifacts without rerunning).
    """
    start = time.perf_counter()
    if records is None:
        records = _collect_records(config, jobs)
    summary = _aggregate(config, records)
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csvs(config, summary, out_dir)
    _write_cardinality(config, summary, out_dir)
    metadata = {
        "package_version": __version__,
        "rng": "philox, substreams keyed by (seed, run, purpose)",
        "seed": config.scenario.seed,
        "n_runs": config.n_runs,
        "n_steps": config.scenario.n_steps,
        "filters": [spec.label for spec in config.filters],
        "jobs": jobs,
        "wall_time_total": time.perf_counter() - start,
        "wall_time_per_run_mean": float(
            np.mean([r.wall_time for r in records])
        ),
    }
    (out_dir / "metadata.json").write_text(json.dumps(metadata, indent=2) + "\n")
    return summary


def emit_cardinality_trace(
    config: ExperimentConfig, jobs: int = 1, records: list | None = None
) -> Path:
    """Write the mean estimated-cardinality-vs-time CSV; returns its path."""
    if records is None:
        records = _collect_records(config, jobs)
    summary = _aggregate(config, records)
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_cardinality(config, summary, out_dir)
    return out_dir / "cardinality.csv"


# ---------------------------------------------------------------------------
# Command line


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajphd",
        description="Monte Carlo benchmark harness for trajectory filters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a Monte Carlo campaign from a config")
    run_p.add_argument("config_path", help="JSON experiment config")
    run_p.add_argument("--runs", type=int, help="override the number of runs")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.add_argument("--jobs", type=int, default=1, help="worker processes")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument(
        "--filters", help="comma-separated subset of filter kinds to run"
    )
    run_p.add_argument(
        "--lscan", help="comma-separated L values for the trajectory filters"
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = {
            "runs": args.runs,
            "seed": args.seed,
            "out": args.out,
            "filters": args.filters.split(",") if args.filters else None,
            "lscan": [int(v) for v in args.lscan.split(",")] if args.lscan else None,
        }
        config = load_config(args.config_path, overrides)
        summary = run_experiment(config, jobs=args.jobs)
    except (TrajPhdError, OSError, ValueError) as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return 1
    width = max(len(label) for label in summary)
    print(f"{'filter':<{width}}  {'d_T':>8}  {'ospa_T':>8}")
    for label, s in summary.items():
        print(f"{label:<{width}}  {s['d_T']:>8.4f}  {s['ospa_T']:>8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
