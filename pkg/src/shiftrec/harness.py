"""Evaluation sweeps over training-set fractions, with JSON/CSV reports.

For every sweep fraction and seed: split, complete the training tensor, and
score predictions on the held-out entries. The test set for a seed is fixed
across fractions; smaller training fractions are prefixes of one draw.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .canonical import ConvergenceConfig
from .data import DEFAULT_FRACTIONS, SplitSpec, split
from .completion import scca
from .tensor import SparseTensor
from .uc import UC_LABEL, ucca

log = logging.getLogger(__name__)

__all__ = ["rmse", "mae", "ExperimentConfig", "ExperimentReport", "evaluate", "METHOD_LABELS"]

METHOD_LABELS = {"sc": "SC", "uc": UC_LABEL}


def rmse(pred, truth) -> float:
    """Root mean squared error; requires at least one entry."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.size == 0:
        raise ValueError("rmse of an empty set")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    """Mean absolute error; requires at least one entry."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.size == 0:
        raise ValueError("mae of an empty set")
    return float(np.mean(np.abs(pred - truth)))


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = ("sc", "uc")
    k: int | None = None
    test_fraction: float = 0.2
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    epsilon: float = ConvergenceConfig.epsilon
    max_sweeps: int = ConvergenceConfig.max_sweeps
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(m.lower() for m in self.methods))
        for m in self.methods:
            if m not in METHOD_LABELS:
                raise ValueError(f"unknown method {m!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        SplitSpec(self.test_fraction, self.fractions, 0)
        ConvergenceConfig(self.epsilon, self.max_sweeps)

    @property
    def convergence(self) -> ConvergenceConfig:
        return ConvergenceConfig(self.epsilon, self.max_sweeps)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)  # one dict per (method, fraction, seed)
    seconds: float = 0.0
    protocol_notes: tuple[str, ...] = (
        "test set fixed per seed across training fractions",
        "UC realised as exp(SC(log ratings))",
    )

    def summary(self) -> list[dict]:
        """Mean and (population) std across seeds per (method, fraction)."""
        out = []
        for m in self.config.methods:
            for f in self.config.fractions:
                sel = [r for r in self.rows if r["method"] == m and r["fraction"] == f]
                if not sel:
                    continue
                rm = np.array([r["rmse"] for r in sel])
                ma = np.array([r["mae"] for r in sel])
                out.append({
                    "method": m,
                    "label": METHOD_LABELS[m],
                    "fraction": f,
                    "n_train": int(np.mean([r["n_train"] for r in sel])),
                    "n_test": int(np.mean([r["n_test"] for r in sel])),
                    "rmse_mean": float(rm.mean()),
                    "rmse_std": float(rm.std()),
                    "mae_mean": float(ma.mean()),
                    "mae_std": float(ma.std()),
                    "sweeps_mean": float(np.mean([r["sweeps"] for r in sel])),
                    "seeds": len(sel),
                })
        return out

    def gap(self, metric: str = "rmse", fraction: float = 1.0) -> float:
        """Mean SC minus UC value of ``metric`` at ``fraction``."""
        by = {(s["method"], s["fraction"]): s for s in self.summary()}
        return by[("sc", fraction)][f"{metric}_mean"] - by[("uc", fraction)][f"{metric}_mean"]

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": asdict(self.config),
                "summary": self.summary(),
                "runs": self.rows,
                "seconds": self.seconds,
                "protocol_notes": list(self.protocol_notes),
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["method", "label", "fraction", "n_train", "n_test", "rmse_mean", "rmse_std",
                "mae_mean", "mae_std", "sweeps_mean", "seeds"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.summary():
            w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in row.items()})
        return buf.getvalue()


def evaluate(t: SparseTensor, config: ExperimentConfig | None = None) -> ExperimentReport:
    """RMSE/MAE of each method at each training fraction and seed."""
    config = config or ExperimentConfig()
    cfg = config.convergence
    k = config.k or t.ndim - 1
    report = ExperimentReport(config)
    t0 = time.perf_counter()
    for seed in config.seeds:
        sp = split(t, SplitSpec(config.test_fraction, config.fractions, seed))
        test_idx = sp.test_coords - 1
        truth = sp.test_values
        for f in config.fractions:
            train = sp.at(f)
            for m in config.methods:
                t1 = time.perf_counter()
                res = scca(train, k, cfg) if m == "sc" else ucca(train, k, cfg)
                pred = res.predict(test_idx, one_based=False)
                report.rows.append({
                    "method": m,
                    "fraction": f,
                    "seed": int(seed),
                    "n_train": train.nnz,
                    "n_test": int(truth.size),
                    "rmse": rmse(pred, truth),
                    "mae": mae(pred, truth),
                    "sweeps": res.sweeps,
                    "seconds": time.perf_counter() - t1,
                })
                log.info("%s f=%.2f seed=%d rmse=%.4f mae=%.4f sweeps=%d", m, f, seed,
                         report.rows[-1]["rmse"], report.rows[-1]["mae"], res.sweeps)
    report.seconds = time.perf_counter() - t0
    return report
