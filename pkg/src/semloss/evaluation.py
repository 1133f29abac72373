"""Fit-quality metrics, the fixed-rho model comparison, and CSV exports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .baselines import eval_gsigmoid, eval_sumexp
from .dataset import MetricGrid, MetricSlice, slice_at_rho, snr_input
from .fitter import FitConfig, fit_gsigmoid, fit_sumexp, fit_unified
from .unified import UnifiedParams, eval_grid, residuals, surface

__all__ = [
    "MODEL_LABELS",
    "PUBLISHED_COMPARISON",
    "ComparisonRow",
    "ComparisonReport",
    "avg_mse_on_slice",
    "compare_models",
    "export_surface",
    "residual_table",
]

MODEL_LABELS = ("unified", "gsigmoid", "sumexp")

# Published average MSE on the accuracy grid, keyed by rho.
PUBLISHED_COMPARISON = {
    8.0: {"unified": 0.0219, "gsigmoid": 0.1425, "sumexp": 0.1133},
    12.0: {"unified": 0.0407, "gsigmoid": 0.2474, "sumexp": 0.0521},
}


def avg_mse_on_slice(predictions, s: MetricSlice) -> float:
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if predictions.size != len(s):
        raise ValueError(f"{predictions.size} predictions for a slice of {len(s)} values")
    return float(np.mean((predictions - s.values) ** 2))


@dataclass(frozen=True)
class ComparisonRow:
    rho: float
    unified_avg_mse: float
    gsigmoid_avg_mse: float
    sumexp_avg_mse: float

    def as_dict(self) -> dict:
        return {
            "unified": self.unified_avg_mse,
            "gsigmoid": self.gsigmoid_avg_mse,
            "sumexp": self.sumexp_avg_mse,
        }

    @property
    def winner(self) -> str:
        values = self.as_dict()
        return min(MODEL_LABELS, key=lambda m: values[m])


@dataclass(frozen=True)
class ComparisonReport:
    metric_name: str
    rows: tuple[ComparisonRow, ...]
    unified_params: UnifiedParams | None = None
    baseline_params: dict = field(default_factory=dict)
    reference: dict | None = None

    @property
    def winner_per_row(self) -> tuple[str, ...]:
        return tuple(r.winner for r in self.rows)

    def row(self, rho: float) -> ComparisonRow:
        for r in self.rows:
            if r.rho == rho:
                return r
        raise KeyError(f"no comparison row for rho={rho:g}")

    def to_dict(self) -> dict:
        out = {"metric_name": self.metric_name, "rows": []}
        for r in self.rows:
            entry = {"rho": r.rho, "computed": r.as_dict(), "winner": r.winner}
            if self.reference and r.rho in self.reference:
                entry["published"] = dict(self.reference[r.rho])
            out["rows"].append(entry)
        if self.unified_params is not None:
            out["unified_params"] = self.unified_params.to_dict()
        if self.baseline_params:
            out["baseline_params"] = {
                f"{kind}@{rho:g}": p.to_dict() for (kind, rho), p in self.baseline_params.items()
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        has_ref = bool(self.reference)
        head = f"{'rho':>6} {'unified':>10} {'gsigmoid':>10} {'sumexp':>10}  winner"
        lines = [f"metric: {self.metric_name}", head]
        for r in self.rows:
            v = r.as_dict()
            lines.append(
                f"{r.rho:>6g} {v['unified']:>10.4f} {v['gsigmoid']:>10.4f} {v['sumexp']:>10.4f}  {r.winner}"
            )
            if has_ref and r.rho in self.reference:
                ref = self.reference[r.rho]
                lines.append(
                    f"{'(pub)':>6} {ref['unified']:>10.4f} {ref['gsigmoid']:>10.4f} {ref['sumexp']:>10.4f}"
                )
        return "\n".join(lines)


def compare_models(grid: MetricGrid, rhos=(8.0, 12.0), cfg: FitConfig = FitConfig(),
                   reference: dict | None = None) -> ComparisonReport:
    """Fit all three models and score them on fixed-rho slices.

    The unified model is fitted once on the whole grid and its predictions on
    each slice come from that single fit; the baselines are refitted per
    slice.
    """
    slices = [slice_at_rho(grid, float(r)) for r in rhos]
    unified, _ = fit_unified(grid, cfg)
    fitted = eval_grid(unified, grid)

    rows = []
    baseline_params = {}
    for s in slices:
        j = int(np.flatnonzero(grid.rho_axis == s.rho)[0])
        gs, _ = fit_gsigmoid(s, cfg)
        se, _ = fit_sumexp(s, cfg)
        baseline_params[("gsigmoid", s.rho)] = gs
        baseline_params[("sumexp", s.rho)] = se
        rows.append(ComparisonRow(
            rho=s.rho,
            unified_avg_mse=avg_mse_on_slice(fitted[:, j], s),
            gsigmoid_avg_mse=avg_mse_on_slice(eval_gsigmoid(gs, s.gamma_axis), s),
            sumexp_avg_mse=avg_mse_on_slice(eval_sumexp(se, s.gamma_axis), s),
        ))
    if reference is not None:
        reference = {float(k): v for k, v in reference.items()}
    return ComparisonReport(grid.metric_name, tuple(rows), unified, baseline_params, reference)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def export_surface(p: UnifiedParams, gamma_range, rho_range, resolution, path) -> np.ndarray:
    """Sample the model on a uniform (gamma, rho) grid and write it as CSV.

    ``resolution`` is an int or a (n_gamma, n_rho) pair.  Returns the samples
    as an (n, 3) array of (gamma_db, rho, value).
    """
    n_g, n_r = (resolution, resolution) if np.isscalar(resolution) else resolution
    (g_lo, g_hi), (r_lo, r_hi) = gamma_range, rho_range
    if n_g < 2 or n_r < 2:
        raise ValueError("resolution must be at least 2 per axis")
    if not (g_hi > g_lo and r_hi > r_lo):
        raise ValueError("ranges must have positive width")
    gamma = np.linspace(g_lo, g_hi, int(n_g))
    rho = np.linspace(r_lo, r_hi, int(n_r))
    values = surface(p.mu0, p.term_array(), snr_input(gamma, p.snr_scale)[:, None], rho[None, :])
    gg, rr = np.meshgrid(gamma, rho, indexing="ij")
    samples = np.column_stack([gg.ravel(), rr.ravel(), values.ravel()])
    _write_rows(path, ["gamma_db", "rho", "value"], samples)
    return samples


def residual_table(p: UnifiedParams, grid: MetricGrid, path) -> np.ndarray:
    """Write (gamma_db, rho, measured, fitted, residual) per grid cell."""
    fitted = eval_grid(p, grid)
    resid = residuals(p, grid)
    gg, rr = np.meshgrid(grid.gamma_axis, grid.rho_axis, indexing="ij")
    table = np.column_stack([gg.ravel(), rr.ravel(), grid.values.ravel(), fitted.ravel(), resid.ravel()])
    _write_rows(path, ["gamma_db", "rho", "measured", "fitted", "residual"], table)
    return table
