"""JSON container for a :class:`TrainReport` so runs can be audited later."""
from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .network import Network
from .trainer import TrainConfig, TrainReport, Violation

FORMAT = "relusgd-train-report"
VERSION = 1


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _unnum(x):
    return None if x is None else float(x)


def report_to_dict(report: TrainReport) -> dict:
    cfg = {k: _num(v) if isinstance(v, float) else v for k, v in asdict(report.config).items()}
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": cfg,
        "n": report.n,
        "converged": report.converged,
        "stuck": report.stuck,
        "nonzero_updates": report.nonzero_updates,
        "total_iterations": report.total_iterations,
        "final_loss": report.final_loss,
        "final_error": report.final_error,
        "init_radius": report.init_radius,
        "w_max": report.w_max,
        "separator_norm": report.separator_norm,
        "second_layer": report.final_net.v.tolist(),
        "first_layer": report.final_net.W.tolist(),
        "picked_indices": report.picked_indices.tolist(),
        "complement_set": report.complement_set.tolist(),
        "phi_trace": None if report.phi_trace is None else report.phi_trace.tolist(),
        "psi_sq_trace": None if report.psi_sq_trace is None else report.psi_sq_trace.tolist(),
        "audit_violations": [asdict(v) for v in report.audit_violations],
    }


def report_from_dict(obj: dict) -> TrainReport:
    if obj.get("format") != FORMAT:
        raise ValueError("not a train report file")
    if obj.get("version") != VERSION:
        raise ValueError(f"unsupported report version {obj.get('version')!r}")
    cfg = dict(obj["config"])
    for key in ("eta", "gamma", "rho", "init_std", "alpha"):
        cfg[key] = _unnum(cfg[key])
    return TrainReport(
        converged=bool(obj["converged"]),
        final_net=Network(np.array(obj["first_layer"], dtype=np.float64),
                          np.array(obj["second_layer"], dtype=np.float64)),
        nonzero_updates=int(obj["nonzero_updates"]),
        total_iterations=int(obj["total_iterations"]),
        picked_indices=np.array(obj["picked_indices"], dtype=np.int64),
        complement_set=np.array(obj["complement_set"], dtype=np.int64),
        final_loss=float(obj["final_loss"]),
        final_error=float(obj["final_error"]),
        config=TrainConfig(**cfg),
        n=int(obj["n"]),
        init_radius=float(obj["init_radius"]),
        w_max=float(obj["w_max"]),
        stuck=bool(obj.get("stuck", False)),
        separator_norm=_unnum(obj.get("separator_norm")),
        phi_trace=None if obj.get("phi_trace") is None else np.array(obj["phi_trace"]),
        psi_sq_trace=None if obj.get("psi_sq_trace") is None else np.array(obj["psi_sq_trace"]),
        audit_violations=[Violation(**v) for v in obj.get("audit_violations", [])],
    )


def save_report(report: TrainReport, path):
    Path(path).write_text(json.dumps(report_to_dict(report)) + "\n")


def load_report(path) -> TrainReport:
    return report_from_dict(json.loads(Path(path).read_text()))
