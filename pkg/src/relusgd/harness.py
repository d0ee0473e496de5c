"""Experiment grids: success rates of SGD variants over (n, k) cells.

Config files are plain ``key = value`` lines (``#`` starts a comment, lists are
comma separated) or JSON objects with the same keys. Recognised keys are the
fields of :class:`ExperimentSpec`.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import bounds
from .datagen import (GenSpec, finalize, gen_adversarial, gen_separable, load_csv, load_idx,
                      shuffled_subset)
from .network import Dataset, Network, default_second_layer, with_bias
from .rng import INIT, TRAIN, substream
from .trainer import VARIANTS, TrainConfig, TrainReport, init_weights, run

SOURCES = ("gaussian", "uniform", "adversarial", "csv", "idx")
CSV_HEADER = ("variant", "n", "k", "trials", "success_rate", "mean_tau", "mean_passes",
              "Tk0", "lower_bound", "compression_bound", "wall_ms")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    source: str = "gaussian"
    d: int = 32
    csv_path: Optional[str] = None
    label_column: str = "-1"
    positive_label: Optional[str] = None
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    keep_labels: Tuple[int, ...] = (3, 5)
    relabel: Optional[Tuple[Tuple[int, int], ...]] = None
    bias: bool = False

    n_values: Tuple[int, ...] = (20, 40)
    k_values: Tuple[int, ...] = (2, 4)
    trials: int = 20
    variants: Tuple[str, ...] = ("noisy",)

    eta: float = 0.01
    eta_rule: str = "fixed"
    gamma: float = 100.0
    rho: float = math.inf
    init_std: float = 0.1
    patience: int = 5
    schedule: str = "cyclic"
    max_passes: int = 5000
    max_raw_passes: Optional[int] = None
    alpha: float = 0.1
    threshold: float = 1e-10
    delta: float = 0.05
    seed: int = 0
    output: Optional[str] = None

    # single-run / bounds settings
    n: Optional[int] = None
    k: Optional[int] = None
    v: Optional[Tuple[float, ...]] = None
    audit: bool = False
    omega_star_norm: Optional[float] = None
    w_max: Optional[float] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not self.n_values or not self.k_values:
            raise ConfigError("n_values and k_values must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        for var in self.variants:
            if var not in VARIANTS:
                raise ConfigError(f"unknown variant {var!r}")
        if self.eta_rule not in ("fixed", "mnist"):
            raise ConfigError("eta_rule must be 'fixed' or 'mnist'")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("source=csv needs csv_path")
        if self.source == "idx" and not (self.idx_images and self.idx_labels):
            raise ConfigError("source=idx needs idx_images and idx_labels")
        try:
            self.train_config(self.k_values[0])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def eta_for(self, k: int) -> float:
        if self.eta_rule == "mnist":
            return 0.001 if k <= 4 else 0.01
        return self.eta

    def train_config(self, k: int, variant: str = "noisy", seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(eta=self.eta_for(k), gamma=self.gamma, rho=self.rho,
                           init_std=self.init_std, patience=self.patience,
                           schedule=self.schedule, max_passes=self.max_passes,
                           max_raw_passes=self.max_raw_passes,
                           seed=self.seed if seed is None else seed, variant=variant,
                           alpha=self.alpha, audit=self.audit)

    def second_layer(self, k: int) -> np.ndarray:
        if self.v is not None:
            v = np.array(self.v, dtype=np.float64)
            if v.size != k:
                raise ConfigError(f"v has {v.size} entries but k={k}")
            return v
        return default_second_layer(k)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
_INT_TUPLES = {"n_values", "k_values", "keep_labels"}
_INTS = {"d", "trials", "patience", "max_passes", "max_raw_passes", "seed", "n", "k"}
_FLOATS = {"eta", "gamma", "rho", "init_std", "alpha", "threshold", "delta",
           "omega_star_norm", "w_max"}
_BOOLS = {"bias", "audit"}


def _split(value) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(x).strip() for x in value]
    return [s.strip() for s in str(value).split(",") if s.strip()]


def _coerce(key: str, value):
    if key in _INT_TUPLES | {"variants"} and value is not None:
        # an empty list stays empty so validation can reject it
        try:
            return tuple(_split(value)) if key == "variants" else tuple(int(x) for x in _split(value))
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {value!r} ({e})") from e
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
        return None
    try:
        if key == "v":
            return tuple(float(x) for x in _split(value))
        if key == "relabel":
            if isinstance(value, dict):
                return tuple((int(a), int(b)) for a, b in value.items())
            return tuple(tuple(int(p) for p in item.split(":")) for item in _split(value))
        if key in _INTS:
            return int(value)
        if key in _FLOATS:
            return float(value)
        if key in _BOOLS:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return s in ("true", "1", "yes")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {key}: {value!r} ({e})") from e
    return str(value).strip()


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentSpec:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON config: {e}") from e
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = line.split(sep, 1)
            raw[key.strip()] = value.strip()
    raw.update(overrides or {})
    kwargs = {}
    for key, value in raw.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        coerced = _coerce(key, value)
        if coerced is not None:
            kwargs[key] = coerced
    try:
        return ExperimentSpec(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path, overrides: Optional[dict] = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror or e}") from e
    return parse_config(text, overrides)


def load_source(spec: ExperimentSpec) -> Optional[Dataset]:
    """Full dataset for file sources; ``None`` for generated ones."""
    if spec.source == "csv":
        data = finalize(load_csv(spec.csv_path, spec.label_column, spec.positive_label))
    elif spec.source == "idx":
        relabel = dict(spec.relabel) if spec.relabel else None
        data = finalize(load_idx(spec.idx_images, spec.idx_labels, spec.keep_labels, relabel))
    else:
        return None
    return with_bias(data) if spec.bias else data


def cell_dataset(spec: ExperimentSpec, n: int, trial: int,
                 full: Optional[Dataset] = None) -> Dataset:
    if spec.source in ("gaussian", "uniform"):
        seed = int(np.random.SeedSequence(spec.seed, spawn_key=(n, trial)).generate_state(1)[0])
        data = gen_separable(GenSpec(spec.d, n, spec.source, seed))
    elif spec.source == "adversarial":
        if n != spec.d:
            raise ConfigError(f"adversarial data has exactly d={spec.d} samples, not {n}")
        data = gen_adversarial(spec.d)
    else:
        full = load_source(spec) if full is None else full
        # bias already applied to the full table
        return shuffled_subset(full, n, spec.seed, trial)
    return with_bias(data) if spec.bias else data


@dataclass(frozen=True)
class TrialResult:
    variant: str
    n: int
    k: int
    trial: int
    success: bool
    tau: int
    passes: float
    Tk0: float
    Tk: float
    lower_bound: float
    compression_bound: float
    wall_ms: float


@dataclass(frozen=True)
class CellResult:
    variant: str
    n: int
    k: int
    trials: int
    success_rate: float
    mean_tau: float
    mean_passes: float
    Tk0: float
    lower_bound: float
    compression_bound: float
    wall_ms: float


@dataclass
class GridResult:
    cells: List[CellResult] = field(default_factory=list)
    trials: List[TrialResult] = field(default_factory=list)

    def cell(self, variant: str, n: int, k: int) -> CellResult:
        for c in self.cells:
            if (c.variant, c.n, c.k) == (variant, n, k):
                return c
        raise KeyError((variant, n, k))


def _complement_risk(report: TrainReport, data: Dataset) -> float:
    idx = report.complement_set
    if idx.size == 0:
        return 0.0
    net = report.final_net
    Z = data.X[idx] @ net.W.T
    if report.config.variant == "leaky":
        out = np.where(Z >= 0, Z, report.config.alpha * Z) @ net.v
    else:
        out = np.maximum(Z, 0.0) @ net.v
    return float(np.mean(np.where(out >= 0, 1.0, -1.0) != data.y[idx]))


def run_trial(spec: ExperimentSpec, variant: str, n: int, k: int, trial: int,
              full: Optional[Dataset] = None) -> Tuple[TrialResult, TrainReport]:
    """One training run of a grid cell.

    Data depend on (seed, n, trial), the initial weights on (seed, n, k, trial)
    and the training stream additionally on the variant, so variants within a
    trial share data and initialisation.
    """
    t0 = time.perf_counter()
    data = cell_dataset(spec, n, trial, full)
    v = spec.second_layer(k)
    W0 = init_weights(k, data.d, spec.rho, substream(spec.seed, INIT, n, k, trial), spec.init_std)
    cfg = spec.train_config(k, variant)
    rng = substream(spec.seed, TRAIN, n, k, trial, VARIANTS.index(variant))
    report = run(data, Network(W0, v), cfg, rng=rng)
    nan = math.nan
    Tk0 = Tk = lower = nan
    if data.separator is not None:
        w = float(np.linalg.norm(data.separator))
        Tk0 = bounds.theorem1_Tk0(v, cfg.eta, w)
        Tk = bounds.theorem1_Tk(v, cfg.eta, report.init_radius, w)
        lower = bounds.theorem2_lower(cfg.eta, v, w)
    comp = nan
    if n >= 2 * report.tau_k:
        comp = bounds.theorem3_compression(n, report.tau_k, spec.delta,
                                           _complement_risk(report, data))
    res = TrialResult(variant, n, k, trial, report.final_loss <= spec.threshold,
                      report.tau_k, report.passes, Tk0, Tk, lower, comp,
                      (time.perf_counter() - t0) * 1e3)
    return res, report


def _mean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return float(np.mean(xs)) if xs else math.nan


def run_grid(spec: ExperimentSpec, threads: int = 1) -> GridResult:
    """Run every (variant, n, k, trial) task and aggregate per cell.

    Results do not depend on ``threads`` or on completion order.
    """
    full = load_source(spec)
    if full is not None and max(spec.n_values) > full.n:
        raise ValueError(f"dataset has {full.n} samples, grid asks for {max(spec.n_values)}")
    tasks = [(var, n, k, t) for var in spec.variants for n in spec.n_values
             for k in spec.k_values for t in range(spec.trials)]

    def work(task):
        return run_trial(spec, *task, full=full)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
        by_key = {(r.variant, r.n, r.k, r.trial): r for r in results}
    else:
        by_key = {task: work(task) for task in tasks}
    trials = [by_key[key] for key in sorted(by_key)]

    cells = []
    for var, n, k in sorted({(v, n, k) for v, n, k, _ in by_key}):
        rs = [by_key[(var, n, k, t)] for t in range(spec.trials)]
        cells.append(CellResult(
            variant=var, n=n, k=k, trials=len(rs),
            success_rate=sum(r.success for r in rs) / len(rs),
            mean_tau=float(np.mean([r.tau for r in rs])),
            mean_passes=float(np.mean([r.passes for r in rs])),
            Tk0=_mean(r.Tk0 for r in rs),
            lower_bound=_mean(r.lower_bound for r in rs),
            compression_bound=_mean(r.compression_bound for r in rs),
            wall_ms=float(sum(r.wall_ms for r in rs)),
        ))
    return GridResult(cells, trials)


def _fmt(x) -> str:
    return f"{x:.9g}"


def grid_csv(result: GridResult, timing: bool = False) -> str:
    """CSV text; ``wall_ms`` is left empty unless ``timing`` so output is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in sorted(result.cells, key=lambda c: (c.variant, c.n, c.k)):
        w.writerow([c.variant, c.n, c.k, c.trials, _fmt(c.success_rate), _fmt(c.mean_tau),
                    _fmt(c.mean_passes), _fmt(c.Tk0), _fmt(c.lower_bound),
                    _fmt(c.compression_bound), _fmt(c.wall_ms) if timing else ""])
    return buf.getvalue()


def emit_csv(result: GridResult, path, timing: bool = False):
    Path(path).write_text(grid_csv(result, timing))


def run_bounds_report(spec: ExperimentSpec, report: Optional[TrainReport] = None) -> bounds.BoundReport:
    """Evaluate the closed-form bounds for the experiment's parameters.

    The separator norm comes from ``omega_star_norm`` when given, otherwise from
    the data source (``sqrt(d)`` for the canonical-basis set, the generated
    separator for synthetic sources). With a trained ``report`` the observed
    update count, complement risk and iterate norm are used as well.
    """
    k = spec.k or (len(spec.v) if spec.v else spec.k_values[0])
    v = spec.second_layer(k)
    n = spec.n or (spec.d if spec.source == "adversarial" else spec.n_values[0])
    if spec.omega_star_norm is not None:
        w = spec.omega_star_norm
    elif spec.source == "adversarial":
        w = math.sqrt(spec.d)
    elif spec.source in ("gaussian", "uniform"):
        w = float(np.linalg.norm(cell_dataset(spec, n, 0).separator))
    else:
        raise ConfigError("file sources carry no separator; set omega_star_norm")
    eta = spec.eta_for(k)
    rho = 0.0 if not math.isfinite(spec.rho) else spec.rho
    inputs = bounds.BoundInputs(eta=eta, v=v, omega_star_norm=w, n=n, d=spec.d, rho=rho,
                                alpha=spec.alpha, gamma=spec.gamma, w_max=spec.w_max,
                                p=spec.patience, delta=spec.delta)
    if report is not None:
        inputs.n = report.n
        inputs.rho = report.init_radius
        inputs.tau_k = report.tau_k
        inputs.complement_risk = 0.0 if report.final_error == 0 else None
        inputs.w_max = report.w_max
        if report.separator_norm is not None and spec.omega_star_norm is None:
            inputs.omega_star_norm = report.separator_norm
    return bounds.evaluate(inputs)
