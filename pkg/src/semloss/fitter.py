"""Multi-start gradient-descent fitting for the unified and baseline models."""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .baselines import (
    GSigmoidParams,
    SumExpParams,
    gsigmoid_jacobian,
    gsigmoid_values,
    sumexp_jacobian,
    sumexp_values,
)
from .dataset import SNR_SCALES, MetricGrid, MetricSlice, snr_input
from .unified import (
    UnifiedParams,
    analytic_gradient,
    finite_diff_gradient,
    jacobian_arrays,
    sse,
    surface,
)

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FitReport",
    "FitDivergenceError",
    "GradientCheckReport",
    "fit_unified",
    "fit_gsigmoid",
    "fit_sumexp",
    "gradient_check",
    "random_unified_params",
]

DEFAULT_ALPHAS = (1e-4, 1e-4, 1e-4, 1e-9, 1e-9, 1e-10, 1e-10)
CHECKPOINT_EVERY = 100
GRADIENT_TOL = 1e-6


class FitDivergenceError(RuntimeError):
    """Every start of a fit produced a non-finite loss."""


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit_unified` and the baseline fits.

    ``alphas`` are the per-group learning rates for mu0, mu1..mu6.
    ``init`` selects the unified-model start: ``"lstsq"`` draws the sigmoid
    and exponential parameters at random and solves for mu0, mu1, mu2 by
    least squares; ``"random"`` draws everything at random.
    ``reset_gradients=False`` keeps accumulating gradients across iterations.
    ``refine="lm"`` hands every unified start's descent result to a
    Levenberg-Marquardt solve (at most ``refine_max_nfev`` evaluations) and
    keeps it when it lowers the SSE; ``"none"`` stops after the descent.
    """

    n_c: int = 6
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    max_iters: int = 200_000
    n_starts: int = 16
    seed: int = 0
    rel_tol: float = 1e-12
    patience: int = 500
    reset_gradients: bool = True
    init: str = "lstsq"
    snr_scale: str = "linear"
    baseline_starts: int = 32
    baseline_iters: int = 20_000
    polish_rounds: int = 3
    refine: str = "lm"
    refine_max_nfev: int = 2000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.alphas) != 7:
            raise ValueError(f"expected 7 learning rates, got {len(self.alphas)}")
        if any(not a >= 0 for a in self.alphas):
            raise ValueError("learning rates must be non-negative")
        if self.n_c < 0:
            raise ValueError("n_c must be >= 0")
        if self.max_iters < 1 or self.baseline_iters < 1:
            raise ValueError("iteration budgets must be >= 1")
        if self.n_starts < 1 or self.baseline_starts < 1:
            raise ValueError("start counts must be >= 1")
        if not self.rel_tol >= 0:
            raise ValueError("rel_tol must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.init not in ("lstsq", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.snr_scale not in SNR_SCALES:
            raise ValueError(f"unknown SNR scale {self.snr_scale!r}")
        if self.refine not in ("lm", "none"):
            raise ValueError(f"unknown refine mode {self.refine!r}")
        if self.refine_max_nfev < 1:
            raise ValueError("refine_max_nfev must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)

    def scaled_rates(self, factor: float) -> "FitConfig":
        return self.replace(alphas=tuple(a * factor for a in self.alphas))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["alphas"] = list(self.alphas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "alphas" in d:
            d["alphas"] = tuple(d["alphas"])
        return cls(**d)

    def digest(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class FitReport:
    final_sse: float
    final_avg_mse: float
    iterations_used: int
    converged: bool
    best_start_index: int
    loss_curve: tuple[float, ...]
    divergence_flag: bool = False
    start_sses: tuple[float, ...] = ()
    diverged_starts: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss_curve"] = list(self.loss_curve)
        d["start_sses"] = [s if np.isfinite(s) else None for s in self.start_sses]
        d["diverged_starts"] = list(self.diverged_starts)
        return d


@dataclass
class _StartResult:
    index: int
    params: object
    sse: float
    iterations: int
    converged: bool
    diverged: bool
    curve: list = field(default_factory=list)


def _pick_best(results: list[_StartResult], n_cells: int) -> tuple[object, FitReport]:
    finite = [r for r in results if not r.diverged and np.isfinite(r.sse)]
    if not finite:
        raise FitDivergenceError(f"all {len(results)} starts diverged")
    # min() keeps the first of equal values, so ties go to the lowest index
    best = min(finite, key=lambda r: r.sse)
    report = FitReport(
        final_sse=best.sse,
        final_avg_mse=best.sse / n_cells,
        iterations_used=best.iterations,
        converged=best.converged,
        best_start_index=best.index,
        loss_curve=tuple(best.curve),
        divergence_flag=len(finite) < len(results),
        start_sses=tuple(r.sse if not r.diverged else float("nan") for r in results),
        diverged_starts=tuple(r.index for r in results if r.diverged),
    )
    return best.params, report


def _run_starts(fn, n: int, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


# -- unified model ----------------------------------------------------------

def random_unified_params(grid: MetricGrid, n_c: int, rng: np.random.Generator,
                          snr_scale: str = "linear") -> UnifiedParams:
    """Data-scaled random parameter draw, also used by the gradient check."""
    span = float(np.ptp(grid.values)) or 1.0
    terms = np.array([
        rng.uniform(-1, 1, n_c) * span,
        rng.uniform(-1, 1, n_c) * span,
        rng.uniform(-1, 1, n_c),
        rng.uniform(-2, 2, n_c),
        rng.uniform(-0.05, 0, n_c),
        rng.uniform(-0.1, 0.1, n_c),
    ])
    return UnifiedParams.from_arrays(float(np.mean(grid.values)), terms, snr_scale)


def _lstsq_start(values, x, rho, n_c, rng, alphas):
    """Random shape parameters, least-squares amplitudes.

    mu3..mu6 are drawn at random; mu0, mu1, mu2 are then linear and are solved
    for with a truncated SVD.  The truncation is increased until the largest
    eigenvalue of the rate-scaled Gauss-Newton matrix is below 1, which keeps
    the first descent steps stable.
    """
    mu3 = rng.uniform(-3, 3, n_c)
    mu4 = rng.uniform(-3, 3, n_c)
    mu5 = rng.uniform(-0.05, 0, n_c)
    mu6 = rng.uniform(-0.1, 0.1, n_c)

    shape_only = np.zeros((6, n_c))
    shape_only[2:] = mu3, mu4, mu5, mu6
    design = jacobian_arrays(0.0, shape_only, x, rho)[:, :1 + 2 * n_c]
    rates = np.sqrt(np.repeat(alphas, [1] + [n_c] * 6))

    coef = None
    for rcond in (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1):
        coef = np.linalg.lstsq(design, values.ravel(), rcond=rcond)[0]
        trial = np.vstack([coef[1:n_c + 1], coef[n_c + 1:], shape_only[2:]])
        scaled = jacobian_arrays(coef[0], trial, x, rho) * rates
        if np.linalg.eigvalsh(2.0 * scaled.T @ scaled).max() < 1.0:
            break
    return float(coef[0]), np.array([coef[1:n_c + 1], coef[n_c + 1:], mu3, mu4, mu5, mu6])


def _least_squares(resid, jac, theta, max_nfev):
    """Levenberg-Marquardt solve (trust-region when underdetermined)."""
    method = "lm" if resid(theta).size >= theta.size else "trf"
    with np.errstate(all="ignore"):
        out = least_squares(resid, theta, jac=jac, method=method, xtol=1e-15, ftol=1e-15,
                            gtol=1e-15, max_nfev=max_nfev)
    return out.x


def _refine(mu0, terms, x, rho, values, max_nfev):
    """Least-squares solve from a descent result; returns (mu0, terms)."""
    n_c = terms.shape[1]

    def resid(th):
        return (surface(th[0], th[1:].reshape(6, n_c), x[:, None], rho[None, :]) - values).ravel()

    def jac(th):
        return jacobian_arrays(th[0], th[1:].reshape(6, n_c), x, rho)

    theta = _least_squares(resid, jac, np.concatenate([[mu0], terms.ravel()]), max_nfev)
    return float(theta[0]), theta[1:].reshape(6, n_c)


def _unified_start(grid: MetricGrid, cfg: FitConfig, index: int) -> _StartResult:
    rng = np.random.default_rng([cfg.seed, index])
    x = snr_input(grid.gamma_axis, cfg.snr_scale)
    values = np.ascontiguousarray(grid.values)
    if cfg.init == "lstsq" and cfg.n_c > 0:
        mu0, terms = _lstsq_start(values, x, grid.rho_axis, cfg.n_c, rng, np.array(cfg.alphas))
    else:
        start = random_unified_params(grid, cfg.n_c, rng, cfg.snr_scale)
        mu0, terms = start.mu0, start.term_array()

    terms = np.ascontiguousarray(terms, dtype=np.float64).reshape(6, cfg.n_c)
    curve = np.empty(cfg.max_iters // CHECKPOINT_EVERY + 1)
    mu0, iters, converged, diverged, n_curve = _kernels.descend(
        values, np.ascontiguousarray(x), np.ascontiguousarray(grid.rho_axis), float(mu0), terms,
        np.array(cfg.alphas), cfg.max_iters, cfg.rel_tol, cfg.patience,
        cfg.reset_gradients, CHECKPOINT_EVERY, curve,
    )
    curve = curve[:n_curve].tolist()
    params = None
    final = float("inf")
    if not diverged and np.isfinite(mu0) and np.all(np.isfinite(terms)):
        params = UnifiedParams.from_arrays(mu0, terms, cfg.snr_scale)
        final = sse(params, grid)
        diverged = not np.isfinite(final)
    else:
        diverged = True
    if not diverged:
        curve.append(final)
        if cfg.refine == "lm":
            r_mu0, r_terms = _refine(mu0, terms, x, grid.rho_axis, values, cfg.refine_max_nfev)
            if np.isfinite(r_mu0) and np.all(np.isfinite(r_terms)):
                refined = UnifiedParams.from_arrays(r_mu0, r_terms, cfg.snr_scale)
                refined_sse = sse(refined, grid)
                if refined_sse < final:
                    params, final = refined, refined_sse
                    curve.append(final)
    if diverged:
        log.warning("start %d diverged after %d iterations", index, iters)
    return _StartResult(index, params, final, int(iters), bool(converged), bool(diverged), curve)


def fit_unified(grid: MetricGrid, cfg: FitConfig = FitConfig()) -> tuple[UnifiedParams, FitReport]:
    """Fit the unified surface by full-batch gradient descent from several starts.

    Every start runs the same fixed-rate descent; the lowest final SSE wins.
    Start ``i`` draws from an RNG seeded with ``(cfg.seed, i)``.
    """
    results = _run_starts(lambda i: _unified_start(grid, cfg, i), cfg.n_starts, cfg.workers)
    return _pick_best(results, grid.n_cells)


# -- baselines --------------------------------------------------------------

def _golden(f, lo, hi, iters=60):
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _polish(loss_fn, k, rounds):
    """Coordinate-wise golden-section refinement within +-10% of each value."""
    k = k.copy()
    best = loss_fn(k)
    for _ in range(rounds):
        for idx in range(k.size):
            width = 0.1 * abs(k[idx]) if k[idx] != 0 else 0.1
            trial = k.copy()

            def along(v):
                trial[idx] = v
                out = loss_fn(trial)
                return out if np.isfinite(out) else np.inf

            v, f = _golden(along, k[idx] - width, k[idx] + width)
            if f < best:
                k[idx] = v
                best = f
    return k, best


def _fit_baseline(s: MetricSlice, cfg: FitConfig, kind, value_fn, jac_fn, starts, make):
    """Multi-start adaptive-step descent followed by a polish of every start.

    The polish is a least-squares solve when ``cfg.refine == "lm"`` and a
    coordinate golden-section search otherwise.
    """
    x = np.ascontiguousarray(snr_input(s.gamma_axis, cfg.snr_scale))
    y = np.ascontiguousarray(s.values)

    def loss(k):
        with np.errstate(all="ignore"):
            return float(np.sum((y - value_fn(k, x)) ** 2))

    def run(i):
        k = np.ascontiguousarray(starts(np.random.default_rng([cfg.seed, i]), i), dtype=np.float64)
        _, iters, converged = _kernels.descend_baseline(
            kind, k, x, y, cfg.baseline_iters, cfg.rel_tol, cfg.patience
        )
        if cfg.refine == "lm":
            final = loss(k)
            trial = _least_squares(lambda t: value_fn(t, x) - y, lambda t: jac_fn(t, x),
                                   k, cfg.refine_max_nfev)
            trial_loss = loss(trial)
            if np.all(np.isfinite(trial)) and trial_loss < final:
                k, final = trial, trial_loss
        else:
            k, final = _polish(loss, k, cfg.polish_rounds)
        diverged = not (np.isfinite(final) and np.all(np.isfinite(k)))
        params = None if diverged else make(k)
        return _StartResult(i, params, final if not diverged else float("inf"),
                            iters, converged, diverged, [final])

    results = _run_starts(run, cfg.baseline_starts, cfg.workers)
    return _pick_best(results, len(s))


def fit_gsigmoid(s: MetricSlice, cfg: FitConfig = FitConfig()) -> tuple[GSigmoidParams, FitReport]:
    lo, hi = float(s.values.min()), float(s.values.max())

    def starts(rng, i):
        k = np.array([lo, hi - lo, -0.5, 0.0])
        if i > 0:
            if rng.random() < 0.5:
                k[0], k[1] = hi, lo - hi
            k[2] = -0.5 * 10.0 ** rng.uniform(-1, 1) * rng.choice([-1.0, 1.0])
            k[3] = rng.uniform(-3, 3)
        return k

    return _fit_baseline(
        s, cfg, _kernels.GSIGMOID, gsigmoid_values, gsigmoid_jacobian, starts,
        lambda k: GSigmoidParams.from_array(k, cfg.snr_scale),
    )


def fit_sumexp(s: MetricSlice, cfg: FitConfig = FitConfig()) -> tuple[SumExpParams, FitReport]:
    span = float(np.ptp(s.values)) or 1.0
    mean = float(s.values.mean())

    def starts(rng, i):
        small = rng.uniform(-1, 1, 2) * 0.1 * span
        if i == 0:
            rates = (0.1, -0.1)
        else:
            rates = tuple(0.1 * 10.0 ** rng.uniform(-1, 1, 2) * np.array([1.0, -1.0]))
        return np.array([small[0], rates[0], small[1], rates[1], mean])

    return _fit_baseline(
        s, cfg, _kernels.SUMEXP, sumexp_values, sumexp_jacobian, starts,
        lambda k: SumExpParams.from_array(k, cfg.snr_scale),
    )


# -- gradient verification --------------------------------------------------

@dataclass(frozen=True)
class GradientCheckReport:
    n_draws: int
    max_rel_error: dict
    tolerance: float = GRADIENT_TOL

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_error.values())

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "max_rel_error": dict(self.max_rel_error),
        }


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(grid: MetricGrid, n_draws: int = 100, seed: int = 0, n_c: int = 6,
                   snr_scale: str = "linear", corrupt=None) -> GradientCheckReport:
    """Compare the analytic gradient with central differences on random draws.

    ``corrupt`` may map a UnifiedGradient to a modified one before comparison;
    it exists so the check itself can be exercised against a wrong gradient.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {f"mu{r}": 0.0 for r in range(7)}
    for _ in range(n_draws):
        p = random_unified_params(grid, n_c, rng, snr_scale)
        exact = analytic_gradient(p, grid)
        if corrupt is not None:
            exact = corrupt(exact)
        approx = finite_diff_gradient(p, grid)
        for name, a in exact.groups().items():
            err = float(relative_error(a, approx.groups()[name]).max(initial=0.0))
            worst[name] = max(worst[name], err)
    return GradientCheckReport(n_draws, worst)
