"""SGD variants for the two-layer ReLU network.

* ``vanilla``: plain subgradient SGD on the hinge loss.
* ``noisy``: the activity indicator of unit j is evaluated at ``<w_j, x> + eps_j``
  where ``eps_j ~ N(0, gamma^2)`` for units with ``y * v_j >= 0`` and
  ``eps_j = 0`` otherwise. The loss indicator is never perturbed.
* ``leaky``: SGD on the leaky-ReLU network, used as a baseline.

A run can record the potentials ``phi(W) = <W, Omega*>_F`` and
``psi^2(W) = ||W||_F^2`` after every non-zero update, where
``Omega* = sgn(v) w*^T / v_min`` is the global optimum built from the dataset
separator ``w*``. Every non-zero update must raise ``phi`` by at least ``eta``
and ``psi^2`` by at most ``eta^2 ||v||^2 + 2 eta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from . import _kernels
from .bounds import theorem1_Tk
from .network import (Dataset, Network, Sample, default_second_layer, empirical_loss,
                      leaky_empirical_loss, leaky_scores, scores, subgradient)
from .rng import INIT, TRAIN, substream

VARIANTS = ("vanilla", "noisy", "leaky")
SCHEDULES = ("cyclic", "uniform")
CONVERGED_LOSS = 1e-10
AUDIT_TOL = 1e-9

_MODES = {"vanilla": _kernels.VANILLA, "noisy": _kernels.NOISY, "leaky": _kernels.LEAKY}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``rho = 0`` starts from the zero matrix, a finite ``rho > 0`` draws
    ``N(0, init_std^2)`` rows clamped to norm ``rho``, and ``rho = inf`` keeps
    the raw Gaussian draw. ``max_passes`` counts effective passes: a run makes at
    most ``max_passes * n`` non-zero updates. ``max_raw_passes`` optionally caps
    all iterations at ``max_raw_passes * n``. The stop rule fires after
    ``patience * n`` consecutive zero updates.
    """

    eta: float = 0.01
    gamma: float = 100.0
    rho: float = 0.0
    init_std: float = 0.1
    patience: int = 5
    schedule: str = "cyclic"
    max_passes: int = 5000
    max_raw_passes: Optional[int] = None
    seed: int = 0
    variant: str = "noisy"
    alpha: float = 0.1
    audit: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.rho >= 0:
            raise ValueError("rho must be non-negative")
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")
        if int(self.patience) != self.patience or self.patience < 1:
            raise ValueError("patience must be a positive integer")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "leaky" and not 0 < self.alpha < 1:
            raise ValueError("leaky variant needs 0 < alpha < 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")
        if self.max_raw_passes is not None and self.max_raw_passes < 1:
            raise ValueError("max_raw_passes must be at least 1")


@dataclass(frozen=True)
class Violation:
    kind: str
    step: int
    value: float
    limit: float

    def __str__(self):
        return f"{self.kind} at update {self.step}: {self.value!r} vs limit {self.limit!r}"


@dataclass(frozen=True, eq=False)
class TrainReport:
    converged: bool
    final_net: Network
    nonzero_updates: int
    total_iterations: int
    picked_indices: np.ndarray
    complement_set: np.ndarray
    final_loss: float
    final_error: float
    config: TrainConfig
    n: int
    init_radius: float
    w_max: float
    stuck: bool = False
    separator_norm: Optional[float] = None
    phi_trace: Optional[np.ndarray] = None
    psi_sq_trace: Optional[np.ndarray] = None
    audit_violations: List[Violation] = field(default_factory=list)

    @property
    def tau_k(self) -> int:
        return self.nonzero_updates

    @property
    def passes(self) -> float:
        return self.total_iterations / self.n


def init_weights(k: int, d: int, rho: float, rng: np.random.Generator,
                 std: float = 0.1) -> np.ndarray:
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho == 0:
        return np.zeros((k, d))
    W = std * rng.standard_normal((k, d))
    if math.isfinite(rho):
        norms = np.linalg.norm(W, axis=1)
        big = norms > rho
        W[big] *= (rho / norms[big])[:, None]
    return W


def mask_noise(v: np.ndarray, y: float, raw: np.ndarray) -> np.ndarray:
    """Keep ``raw[j]`` where ``y * v_j >= 0``, zero elsewhere."""
    return np.where(y * np.asarray(v) >= 0, raw, 0.0)


def noise_mask(v, y, gamma: float, rng: np.random.Generator) -> np.ndarray:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    v = np.asarray(v, dtype=np.float64)
    return mask_noise(v, y, gamma * rng.standard_normal(v.shape[0]))


def _loss_fires(W, v, s: Sample) -> bool:
    return 1.0 - s.y * (v @ np.maximum(W @ s.x, 0.0)) > 0


def _apply(W, v, s: Sample, eta, gate) -> Tuple[np.ndarray, bool]:
    if not np.any(gate != 0):
        return np.array(W), False
    coeff = s.y * v * gate
    return _commit(W, W + eta * np.outer(coeff, s.x))


def _commit(W, W_next) -> Tuple[np.ndarray, bool]:
    # entries whose value did not change keep their bits (so -0.0 stays -0.0);
    # an update that rounds away entirely, or x = 0, is not a non-zero update
    W = np.asarray(W)
    same = W_next == W
    return np.where(same, W, W_next), not bool(np.all(same))


def _check_sample(net: Network, s: Sample):
    if s.x.shape[0] != net.d:
        raise ValueError(f"sample has dimension {s.x.shape[0]}, network expects {net.d}")


def noisy_step(net: Network, s: Sample, eta: float, gamma: float = 0.0,
               rng: Optional[np.random.Generator] = None,
               noise: Optional[np.ndarray] = None) -> Tuple[np.ndarray, bool]:
    """One update of the noise-injected rule; returns ``(W_next, was_nonzero)``.

    ``noise`` is an already-masked perturbation vector; when omitted it is drawn
    with :func:`noise_mask` from ``rng``.
    """
    _check_sample(net, s)
    W, v = net.W, net.v
    if noise is None:
        if gamma > 0 and rng is None:
            raise ValueError("rng required to draw noise")
        noise = noise_mask(v, s.y, gamma, rng) if gamma > 0 else np.zeros(net.k)
    if not _loss_fires(W, v, s):
        return np.array(W), False
    gate = ((W @ s.x + noise) >= 0).astype(np.float64)
    return _apply(W, v, s, eta, gate)


def vanilla_step(net: Network, s: Sample, eta: float) -> Tuple[np.ndarray, bool]:
    G = subgradient(net, s)
    if not np.any(G != 0):
        return np.array(net.W), False
    return _commit(net.W, net.W - eta * G)


def leaky_step(net: Network, s: Sample, eta: float, alpha: float) -> Tuple[np.ndarray, bool]:
    if not 0 < alpha < 1:
        raise ValueError(f"leaky factor must lie in (0, 1), got {alpha}")
    _check_sample(net, s)
    W, v = net.W, net.v
    z = W @ s.x
    if not 1.0 - s.y * (v @ np.where(z >= 0, z, alpha * z)) > 0:
        return np.array(W), False
    return _apply(W, v, s, eta, np.where(z >= 0, 1.0, alpha))


def optimum_from_separator(v, separator) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.outer(np.sign(v), separator) / np.min(np.abs(v))


def phi(W, omega_mat) -> float:
    return float(np.sum(W * omega_mat))


def psi_sq(W) -> float:
    return float(np.sum(W * W))


def indicator_gap(W, v, x, y, noise) -> float:
    """``sum_j y v_j relu(<w_j,x>) - sum_j y v_j <w_j,x> 1{<w_j,x> + eps_j >= 0}``.

    Non-negative whenever ``noise`` follows the masking rule.
    """
    z = np.asarray(W) @ x
    lhs = np.sum(y * v * z * ((z + noise) >= 0))
    rhs = np.sum(y * v * np.maximum(z, 0.0))
    return float(rhs - lhs)


def _variant_loss(W, v, data: Dataset, cfg: TrainConfig) -> float:
    net = Network(W, v)
    if cfg.variant == "leaky":
        return leaky_empirical_loss(net, data, cfg.alpha)
    return empirical_loss(net, data)


def _is_fixed_point(W, v, data: Dataset, cfg: TrainConfig) -> bool:
    """True when no sample can trigger an update of a deterministic variant."""
    Z = data.X @ W.T
    if cfg.variant == "leaky":
        out = np.where(Z >= 0, Z, cfg.alpha * Z) @ v
        return not np.any(1.0 - data.y * out > 0)
    out = np.maximum(Z, 0.0) @ v
    return not np.any((1.0 - data.y * out > 0) & np.any(Z >= 0, axis=1))


def _python_pass(W, X, y, v, order, eps, eta, mode, alpha, zero_run, stop_after,
                 max_updates, record, omega_mat, phi_out, psi_out, picked_out, w_max_sq):
    """Reference pass built from the single-step functions (slow)."""
    updates = it = 0
    for t in range(order.shape[0]):
        if zero_run >= stop_after or updates >= max_updates:
            break
        it += 1
        i = int(order[t])
        net, s = Network(W, v), Sample(X[i], int(y[i]))
        if mode == _kernels.NOISY:
            W_next, moved = noisy_step(net, s, eta, noise=mask_noise(v, s.y, eps[t]))
        elif mode == _kernels.LEAKY:
            W_next, moved = leaky_step(net, s, eta, alpha)
        else:
            W_next, moved = vanilla_step(net, s, eta)
        if not moved:
            zero_run += 1
            continue
        W[:] = W_next
        w_max_sq = max(w_max_sq, float(np.max(np.sum(W * W, axis=1))))
        picked_out[updates] = i
        if record:
            phi_out[updates] = phi(W, omega_mat)
            psi_out[updates] = psi_sq(W)
        updates += 1
        zero_run = 0
    return it, updates, zero_run, w_max_sq


def run(data: Dataset, net0: Network, cfg: TrainConfig,
        rng: Optional[np.random.Generator] = None, engine: str = "compiled") -> TrainReport:
    """Train ``net0`` on ``data``.

    Stops once ``patience * n`` consecutive iterations make no update and the
    empirical loss re-checked over the full dataset is at most 1e-10
    (``converged=True``). If the loss is still positive the run continues, unless
    a deterministic variant sits at a fixed point (``stuck=True``). Otherwise it
    ends with ``converged=False`` after ``max_passes * n`` non-zero updates, or
    after ``max_raw_passes * n`` iterations when that cap is set.
    """
    n = data.n
    if n == 0:
        raise ValueError("empty dataset")
    if data.d != net0.d:
        raise ValueError(f"data dimension {data.d} does not match network input {net0.d}")
    if cfg.audit and data.separator is None:
        raise ValueError("audit requested but the dataset carries no separator")
    if engine not in ("compiled", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    sgd_pass = _kernels.sgd_pass if engine == "compiled" else _python_pass
    rng = substream(cfg.seed, TRAIN) if rng is None else rng

    v = np.ascontiguousarray(net0.v)
    W = np.array(net0.W, dtype=np.float64, order="C")
    X = np.ascontiguousarray(data.X)
    y = np.ascontiguousarray(data.y)
    k = W.shape[0]
    mode = _MODES[cfg.variant]
    noisy = mode == _kernels.NOISY and cfg.gamma > 0
    deterministic = not noisy

    if data.separator is not None:
        omega_mat = optimum_from_separator(v, data.separator)
    else:
        omega_mat = np.zeros_like(W)
    record = bool(cfg.audit)
    phi_chunks = [np.array([phi(W, omega_mat)])] if record else []
    psi_chunks = [np.array([psi_sq(W)])] if record else []
    picked_chunks = []
    phi_buf = np.empty(n if record else 0)
    psi_buf = np.empty(n if record else 0)
    picked_buf = np.empty(n, dtype=np.int64)
    row_sq = np.sum(W * W, axis=1)
    init_radius = float(np.sqrt(np.max(row_sq)))
    w_max_sq = float(np.max(row_sq))

    max_updates = cfg.max_passes * n
    max_iter = None if cfg.max_raw_passes is None else cfg.max_raw_passes * n
    stop_after = cfg.patience * n
    total = 0
    tau = 0
    pos = 0
    zero_run = 0
    converged = stuck = False
    no_noise = np.zeros((n, k))
    while tau < max_updates and (max_iter is None or total < max_iter):
        m = n if max_iter is None else min(n, max_iter - total)
        if cfg.schedule == "cyclic":
            order = (pos + np.arange(m, dtype=np.int64)) % n
        else:
            order = rng.integers(0, n, size=m, dtype=np.int64)
        eps = cfg.gamma * rng.standard_normal((m, k)) if noisy else no_noise
        it, upd, zero_run, w_max_sq = sgd_pass(
            W, X, y, v, order, eps, cfg.eta, mode, cfg.alpha, zero_run, stop_after,
            max_updates - tau, record, omega_mat, phi_buf, psi_buf, picked_buf, w_max_sq)
        total += it
        tau += upd
        pos = (pos + it) % n
        if upd:
            picked_chunks.append(picked_buf[:upd].copy())
            if record:
                phi_chunks.append(phi_buf[:upd].copy())
                psi_chunks.append(psi_buf[:upd].copy())
        if zero_run >= stop_after:
            if _variant_loss(W, v, data, cfg) <= CONVERGED_LOSS:
                converged = True
                break
            if deterministic and _is_fixed_point(W, v, data, cfg):
                stuck = True
                break
            zero_run = 0

    picked = np.concatenate(picked_chunks) if picked_chunks else np.empty(0, dtype=np.int64)
    final = Network(W, v)
    if cfg.variant == "leaky":
        pred = leaky_scores(final, X, cfg.alpha)
    else:
        pred = scores(final, X)
    report = TrainReport(
        converged=converged,
        final_net=final,
        nonzero_updates=int(picked.shape[0]),
        total_iterations=total,
        picked_indices=picked,
        complement_set=np.setdiff1d(np.arange(n), picked),
        final_loss=_variant_loss(W, v, data, cfg),
        final_error=float(np.mean(np.where(pred >= 0, 1.0, -1.0) != y)),
        config=cfg,
        n=n,
        init_radius=init_radius,
        w_max=math.sqrt(w_max_sq),
        stuck=stuck,
        separator_norm=None if data.separator is None else float(np.linalg.norm(data.separator)),
        phi_trace=np.concatenate(phi_chunks) if record else None,
        psi_sq_trace=np.concatenate(psi_chunks) if record else None,
    )
    if record and cfg.variant != "leaky":
        report = replace(report, audit_violations=audit_step_invariants(report))
    return report


def check_trace(phi_trace, psi_sq_trace, eta: float, v, tau_limit: Optional[float] = None,
                tol: float = AUDIT_TOL) -> List[Violation]:
    """Per-update potential inequalities and the total update count cap."""
    phi_trace = np.asarray(phi_trace, dtype=np.float64)
    psi_sq_trace = np.asarray(psi_sq_trace, dtype=np.float64)
    if phi_trace.shape != psi_sq_trace.shape or phi_trace.ndim != 1 or phi_trace.size == 0:
        raise ValueError("traces must be equal-length non-empty sequences")
    v = np.asarray(v, dtype=np.float64)
    out = []
    d_phi = np.diff(phi_trace)
    d_psi = np.diff(psi_sq_trace)
    psi_cap = eta**2 * float(v @ v) + 2 * eta
    for t in np.flatnonzero(d_phi < eta - tol):
        out.append(Violation("phi_increment", int(t), float(d_phi[t]), eta))
    for t in np.flatnonzero(d_psi > psi_cap + tol):
        out.append(Violation("psi_sq_increment", int(t), float(d_psi[t]), psi_cap))
    tau = phi_trace.size - 1
    if tau_limit is not None and tau > tau_limit:
        out.append(Violation("update_count", tau, float(tau), float(tau_limit)))
    return out


def audit_step_invariants(report: TrainReport) -> List[Violation]:
    """Replay the recorded potentials of an audited run against the proof bounds.

    Also compares the number of non-zero updates with the worst-case count
    evaluated at the run's actual initial radius and separator norm.
    """
    if report.phi_trace is None or report.psi_sq_trace is None:
        raise ValueError("report carries no phi/psi traces; rerun with audit=True")
    if report.config.variant == "leaky":
        raise ValueError("the potential inequalities apply to ReLU variants only")
    v = report.final_net.v
    limit = None
    if report.separator_norm is not None:
        limit = theorem1_Tk(v, report.config.eta, report.init_radius, report.separator_norm)
    out = check_trace(report.phi_trace, report.psi_sq_trace, report.config.eta, v, limit)
    if len(report.phi_trace) - 1 != report.nonzero_updates:
        out.append(Violation("trace_length", report.nonzero_updates,
                             float(len(report.phi_trace) - 1), float(report.nonzero_updates)))
    return out


def train(data: Dataset, k: int, cfg: TrainConfig, v=None) -> TrainReport:
    """Build ``v`` (default +1/-1 halves), initialise from ``cfg`` and run."""
    v = default_second_layer(k) if v is None else np.asarray(v, dtype=np.float64)
    W0 = init_weights(len(v), data.d, cfg.rho, substream(cfg.seed, INIT), cfg.init_std)
    return run(data, Network(W0, v), cfg)
