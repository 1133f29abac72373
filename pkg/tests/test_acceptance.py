"""Acceptance suite.

Every criterion is a ``check_*`` function returning ``(passed, detail)``.
The pytest wrappers print one ``PASS``/``FAIL`` line per criterion and then
assert.  Run ``python3 tests/test_acceptance.py`` to get only the summary
lines.  The fits use the default configuration, so the whole suite takes a
few minutes on one core.
"""
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from semloss.baselines import GSigmoidParams, SumExpParams, eval_gsigmoid, eval_sumexp
from semloss.cli import main as cli_main
from semloss.dataset import TABLE_NAMES, MetricSlice, embedded_source, embedded_table
from semloss.fitter import FitConfig, fit_gsigmoid, fit_sumexp, fit_unified, gradient_check
from semloss.unified import TermParams, UnifiedParams, published_params, published_source, sse

sys.path.insert(0, str(Path(__file__).parent))
from conftest import SYN_GAMMA, SYN_RHO, synthetic_grid  # noqa: E402
from reference_values import GRIDS, PARAMETER_SETS  # noqa: E402

PUBLISHED_BASELINES = {
    8.0: {"gsigmoid": 0.1425, "sumexp": 0.1133},
    12.0: {"gsigmoid": 0.2474, "sumexp": 0.0521},
}

SYNTHETIC_UNIFIED = {
    1: UnifiedParams(40.0, (TermParams(20.0, 30.0, 0.5, -1.0, -0.05, 0.1),)),
    2: UnifiedParams(40.0, (TermParams(20.0, 30.0, 0.5, -1.0, -0.05, 0.1),
                            TermParams(-10.0, 15.0, 0.2, 1.0, -0.02, -0.05))),
}
SYNTHETIC_BASELINES = [
    GSigmoidParams(80.0, 15.0, -0.7, 0.3),
    GSigmoidParams(90.0, -40.0, -1.2, 2.0),
    SumExpParams(-10.0, -0.3, -5.0, -1.0, 95.0),
    SumExpParams(20.0, -0.5, -8.0, 0.2, 60.0),
]


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def check_gradient():
    """Analytic gradient vs central differences, 100 draws on every grid."""
    def run():
        return [gradient_check(embedded_table(name), n_draws=100, seed=0) for name in TABLE_NAMES]

    reports, elapsed = _timed(run)
    worst = max(max(r.max_rel_error.values()) for r in reports)
    ok = all(r.passed for r in reports) and worst < 1e-6 and elapsed < 10.0
    return ok, f"max relative error {worst:.2e} over {len(reports)} grids, {elapsed:.1f} s"


def check_published_fit():
    """Published accuracy parameters reproduce the accuracy grid."""
    def run():
        grid = embedded_table("evit-accuracy")
        return math.sqrt(sse(published_params("evit-accuracy"), grid) / grid.n_cells)

    rmse, elapsed = _timed(run)
    return rmse <= 2.0 and elapsed < 1.0, f"RMSE {rmse:.4f} (limit 2.0), {elapsed:.3f} s"


def check_comparison():
    """Default compare run on the accuracy grid."""
    with tempfile.TemporaryDirectory() as out:
        def run():
            code = cli_main(["compare", "--table", "evit-accuracy", "--out-dir", out])
            return code, json.loads((Path(out) / "evit-accuracy_compare.json").read_text())

        (code, report), elapsed = _timed(run)
    rows = {row["rho"]: row["computed"] for row in report["rows"]}
    limits = {8.0: 0.15, 12.0: 0.25}
    failures = []
    for rho, values in rows.items():
        if not values["unified"] <= limits[rho]:
            failures.append(f"unified@{rho:g}")
        for model in ("gsigmoid", "sumexp"):
            if not values[model] <= 1.5 * PUBLISHED_BASELINES[rho][model]:
                failures.append(f"{model}@{rho:g}")
        if not values["unified"] < values["gsigmoid"]:
            failures.append(f"ordering@{rho:g}")
    if code != 0 or sorted(rows) != [8.0, 12.0]:
        failures.append("run")
    if elapsed >= 600.0:
        failures.append("runtime")
    detail = "; ".join(
        f"rho={rho:g}: unified {v['unified']:.4f}, gsigmoid {v['gsigmoid']:.4f}, sumexp {v['sumexp']:.4f}"
        for rho, v in sorted(rows.items())
    )
    detail += f"; {elapsed:.0f} s"
    if failures:
        detail += " (failed: " + ", ".join(failures) + ")"
    return not failures, detail


def check_synthetic_recovery():
    """Fits recover noise-free synthetic data generated by each model."""
    def run():
        errors = {}
        for n_c, truth in SYNTHETIC_UNIFIED.items():
            _, report = fit_unified(synthetic_grid(truth), FitConfig(n_c=n_c))
            errors[f"unified N_c={n_c}"] = report.final_avg_mse
        for truth in SYNTHETIC_BASELINES:
            f = eval_gsigmoid if isinstance(truth, GSigmoidParams) else eval_sumexp
            fit = fit_gsigmoid if isinstance(truth, GSigmoidParams) else fit_sumexp
            s = MetricSlice("synthetic", 4.0, SYN_GAMMA, f(truth, SYN_GAMMA))
            _, report = fit(s, FitConfig())
            errors[f"{truth.kind} {tuple(truth.as_array().tolist())}"] = report.final_avg_mse
        return errors

    errors, elapsed = _timed(run)
    ok = elapsed < 120.0
    for label, err in errors.items():
        ok &= err < (1e-4 if label.startswith("unified") else 1e-6)
    detail = ", ".join(f"{k}: {v:.1e}" for k, v in errors.items())
    return ok, f"{detail}; {elapsed:.0f} s"


def _non_increasing(curve, rel=1e-9):
    return all(b <= a * (1.0 + rel) for a, b in zip(curve, curve[1:]))


def check_monotone_descent():
    """At a tenth of the default rates every loss checkpoint is non-increasing."""
    cfg = FitConfig().scaled_rates(0.1)
    results = {}
    for name in TABLE_NAMES:
        _, report = fit_unified(embedded_table(name), cfg)
        results[name] = (_non_increasing(report.loss_curve), len(report.loss_curve))
    ok = all(r[0] for r in results.values())
    bad = [name for name, r in results.items() if not r[0]]
    detail = f"{sum(n for _, n in results.values())} checkpoints on {len(results)} grids"
    return ok, detail + (f" (increasing on {', '.join(bad)})" if bad else "")


def check_determinism():
    """Two fit runs with identical flags give byte-identical outputs."""
    blobs = []
    with tempfile.TemporaryDirectory() as root:
        for run in ("first", "second"):
            out = Path(root) / run
            code = cli_main(["fit", "--table", "evit-accuracy", "--seed", "0", "--out-dir", str(out)])
            blobs.append((code, [
                (out / f"evit-accuracy_unified_{suffix}").read_bytes()
                for suffix in ("params.json", "report.json")
            ]))
    ok = blobs[0][0] == blobs[1][0] == 0 and blobs[0][1] == blobs[1][1]
    return ok, "params and report " + ("identical" if ok else "differ")


def check_zero_terms():
    """With no terms the fitted offset is the grid mean."""
    worst = 0.0
    for name in TABLE_NAMES:
        grid = embedded_table(name)
        params, _ = fit_unified(grid, FitConfig(n_c=0))
        mean = float(np.mean(grid.values))
        worst = max(worst, abs(params.mu0 - mean) / abs(mean))
    return worst <= 1e-6, f"max relative offset error {worst:.1e} over {len(TABLE_NAMES)} grids"


def check_embedded_values():
    """Embedded grids and parameter sets match the reference transcription string for string."""
    mismatches = []
    for name, rows in GRIDS.items():
        source = embedded_source(name)
        grid = embedded_table(name)
        for row in rows:
            if source.get(row[0]) != list(row[1:]):
                mismatches.append(f"{name} gamma={row[0]}")
                continue
            i = grid.gamma_axis.tolist().index(float(row[0]))
            if grid.values[i].tolist() != [float(v) for v in row[1:]]:
                mismatches.append(f"{name} gamma={row[0]} parsed")
    for name, (mu0, rows) in PARAMETER_SETS.items():
        src_mu0, src_rows = published_source(name)
        if src_mu0 != mu0 or [tuple(r) for r in src_rows] != [tuple(r) for r in rows]:
            mismatches.append(f"parameters {name}")
    n_values = sum(len(r) - 1 for rows in GRIDS.values() for r in rows)
    n_values += sum(1 + 6 * len(rows) for _, rows in PARAMETER_SETS.values())
    detail = f"{n_values} values compared"
    return not mismatches, detail + (f" (mismatch: {', '.join(mismatches)})" if mismatches else "")


CRITERIA = [
    (1, check_gradient),
    (2, check_published_fit),
    (3, check_comparison),
    (4, check_synthetic_recovery),
    (5, check_monotone_descent),
    (6, check_determinism),
    (7, check_zero_terms),
    (8, check_embedded_values),
]


def _line(number, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("number, check", CRITERIA, ids=[f"criterion_{n}" for n, _ in CRITERIA])
def test_acceptance(number, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(number, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = [(n, *check()) for n, check in CRITERIA]
    for n, ok, detail in results:
        print(_line(n, ok, detail))
    sys.exit(0 if all(ok for _, ok, _ in results) else 1)
