"""Closed-form bounds on non-zero update counts, stopping confidence and risk.

Logarithms are natural. Risk bounds above 1 are returned as-is; use
:func:`is_vacuous_risk` to flag them.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np


def _v_stats(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("v must be a non-empty vector")
    if not (np.any(v > 0) and np.any(v < 0)) or np.any(v == 0):
        raise ValueError("v needs non-zero entries of both signs")
    return v.size, float(np.min(np.abs(v))), float(v @ v)


def theorem1_Tk(v, eta: float, rho: float, omega_star_norm: float,
                k: Optional[int] = None) -> float:
    """Worst-case number of non-zero updates of noise-injected SGD.

    ``(k / (eta v_min^2)) [(eta |v|^2 + 2) |w*|^2 + 2 rho v_min |v|^2
    + sqrt(2 rho v_min |w*| (eta |v|^2 + 2)) |w*|]``; ``k`` defaults to ``len(v)``.
    """
    kv, vmin, vsq = _v_stats(v)
    k = kv if k is None else k
    if eta <= 0 or rho < 0 or omega_star_norm < 0:
        raise ValueError("need eta > 0, rho >= 0 and a non-negative separator norm")
    a = eta * vsq + 2
    w = omega_star_norm
    inner = a * w * w + 2 * rho * vmin * vsq + math.sqrt(2 * rho * vmin * w * a) * w
    return k / (eta * vmin**2) * inner


def theorem1_Tk0(v, eta: float, omega_star_norm: float, k: Optional[int] = None) -> float:
    """Zero-initialisation cap ``(k / (eta v_min^2)) (eta |v|^2 + 2) |w*|^2``."""
    return theorem1_Tk(v, eta, 0.0, omega_star_norm, k)


def leaky_bound(alpha: float, eta: float, v, omega_star_norm: float) -> float:
    """Worst-case update count for SGD on a leaky-ReLU network from zero init.

    Returns ``inf`` at ``alpha = 0``.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    vsq = float(np.dot(v, v))
    if alpha == 0:
        return math.inf
    return omega_star_norm**2 / alpha**2 * (1 + 1 / (eta * vsq))


def theorem2_lower(eta: float, v, omega_star_norm: float) -> float:
    """``|w*|^2 / (eta |v|^2)``; attained scale on the canonical-basis dataset."""
    vsq = float(np.dot(v, v))
    if eta <= 0 or vsq <= 0:
        raise ValueError("need eta > 0 and non-zero v")
    return omega_star_norm**2 / (eta * vsq)


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _log_normal_cdf(z: float) -> float:
    if z > 0:
        return math.log1p(-0.5 * math.erfc(z / math.sqrt(2.0)))
    return math.log(normal_cdf(z))


def prop1_confidence(w_max: float, gamma: float, p: int, v) -> float:
    """Probability that the zero-update stop rule has found a global optimum.

    ``1 - Phi(w_max / gamma) ** (p * min(#{v_j > 0}, #{v_j < 0}))``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if w_max <= 0 or p < 1:
        raise ValueError("need w_max > 0 and p >= 1")
    v = np.asarray(v)
    m = min(int(np.sum(v > 0)), int(np.sum(v < 0)))
    if m == 0:
        raise ValueError("v needs entries of both signs")
    return -math.expm1(p * m * _log_normal_cdf(w_max / gamma))


def theorem3_compression(n: int, tau_k: int, delta: float, complement_risk: float) -> float:
    """Compression risk bound; requires ``n >= 2 tau_k``.

    ``r + sqrt(r * 4 tau log(n/delta) / n) + 8 tau log(n/delta) / n`` with ``r``
    the error on the samples never used by a non-zero update.
    """
    if n < 2 * tau_k:
        raise ValueError(f"precondition n >= 2*tau_k violated (n={n}, tau_k={tau_k})")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 <= complement_risk <= 1:
        raise ValueError("complement risk must lie in [0, 1]")
    c = tau_k * math.log(n / delta) / n
    return complement_risk + math.sqrt(complement_risk * 4 * c) + 8 * c


def corollary1_bound(Tk: float, n: int, delta: float) -> float:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 8 * Tk * math.log(n / delta) / n


def is_vacuous_risk(value: float) -> bool:
    return not value <= 1


@dataclass
class BoundInputs:
    eta: float
    v: Sequence[float]
    omega_star_norm: float
    n: Optional[int] = None
    d: Optional[int] = None
    rho: float = 0.0
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    w_max: Optional[float] = None
    p: int = 5
    delta: float = 0.05
    tau_k: Optional[int] = None
    complement_risk: Optional[float] = None


@dataclass
class BoundReport:
    """Evaluated bounds; ``None`` marks an input that was not supplied and a
    string marks a violated precondition."""

    k: int
    eta: float
    omega_star_norm: float
    Tk: float
    Tk0: float
    lower_bound: float
    leaky_bound: Optional[float] = None
    prop1_confidence: Optional[float] = None
    corollary1_bound: Optional[float] = None
    corollary1_vacuous: Optional[bool] = None
    tau_k: Optional[int] = None
    complement_risk: Optional[float] = None
    compression_bound: object = None
    compression_vacuous: Optional[bool] = None

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return str(x)
            return x
        return json.dumps({k: clean(x) for k, x in asdict(self).items()}, indent=2) + "\n"


def evaluate(inputs: BoundInputs) -> BoundReport:
    v = np.asarray(inputs.v, dtype=np.float64)
    rep = BoundReport(
        k=int(v.size),
        eta=inputs.eta,
        omega_star_norm=inputs.omega_star_norm,
        Tk=theorem1_Tk(v, inputs.eta, inputs.rho, inputs.omega_star_norm),
        Tk0=theorem1_Tk0(v, inputs.eta, inputs.omega_star_norm),
        lower_bound=theorem2_lower(inputs.eta, v, inputs.omega_star_norm),
    )
    if inputs.alpha is not None:
        rep.leaky_bound = leaky_bound(inputs.alpha, inputs.eta, v, inputs.omega_star_norm)
    if inputs.gamma and inputs.w_max:
        rep.prop1_confidence = prop1_confidence(inputs.w_max, inputs.gamma, inputs.p, v)
    if inputs.n:
        rep.corollary1_bound = corollary1_bound(rep.Tk, inputs.n, inputs.delta)
        rep.corollary1_vacuous = is_vacuous_risk(rep.corollary1_bound)
    if inputs.tau_k is not None and inputs.n:
        rep.tau_k = int(inputs.tau_k)
        rep.complement_risk = inputs.complement_risk
        if inputs.n < 2 * inputs.tau_k:
            rep.compression_bound = "precondition n>=2tau_k violated"
            rep.compression_vacuous = True
        elif rep.complement_risk is not None:
            rep.compression_bound = theorem3_compression(
                inputs.n, inputs.tau_k, inputs.delta, rep.complement_risk)
            rep.compression_vacuous = is_vacuous_risk(rep.compression_bound)
    return rep
