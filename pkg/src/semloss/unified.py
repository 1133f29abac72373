"""Two-dimensional semantic loss surface over SNR and compression ratio.

    xi(x, rho) = mu0 + sum_k (mu1_k + mu2_k * sig_k(x)) * beta_k(rho)

    sig_k(x)    = 1 / (1 + exp(-mu3_k * x - mu4_k))
    beta_k(rho) = exp(mu5_k * rho) + mu6_k * rho

``x`` is the SNR as the model consumes it: the linear power ratio by default,
or the dB value itself for parameter sets with ``snr_scale="db"``.  Public
functions always take SNR in dB and convert.

Internally a parameter set is a scalar ``mu0`` plus a ``(6, n_c)`` array whose
rows are mu1..mu6.  Exponent arguments are clamped to +-EXP_CLAMP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import SNR_SCALES, MetricGrid, snr_input

__all__ = [
    "EXP_CLAMP",
    "TermParams",
    "UnifiedParams",
    "TermIntermediates",
    "UnifiedGradient",
    "term_intermediates",
    "jacobian_arrays",
    "eval_point",
    "eval_grid",
    "residuals",
    "sse",
    "analytic_gradient",
    "finite_diff_gradient",
    "surface",
    "PUBLISHED_SETS",
    "published_params",
    "published_source",
]

EXP_CLAMP = 500.0


@dataclass(frozen=True)
class TermParams:
    mu1: float
    mu2: float
    mu3: float
    mu4: float
    mu5: float
    mu6: float

    def __post_init__(self):
        for name in ("mu1", "mu2", "mu3", "mu4", "mu5", "mu6"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mu1, self.mu2, self.mu3, self.mu4, self.mu5, self.mu6)


@dataclass(frozen=True)
class UnifiedParams:
    mu0: float
    terms: tuple[TermParams, ...] = ()
    snr_scale: str = "linear"

    def __post_init__(self):
        mu0 = float(self.mu0)
        if not math.isfinite(mu0):
            raise ValueError(f"mu0 must be finite, got {mu0}")
        if self.snr_scale not in SNR_SCALES:
            raise ValueError(f"unknown SNR scale {self.snr_scale!r}")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n_c(self) -> int:
        return len(self.terms)

    def term_array(self) -> np.ndarray:
        """Per-term parameters as a (6, n_c) array; row r holds mu_{r+1}."""
        if not self.terms:
            return np.zeros((6, 0))
        return np.array([t.as_tuple() for t in self.terms], dtype=np.float64).T

    @classmethod
    def from_arrays(cls, mu0: float, terms: np.ndarray, snr_scale: str = "linear") -> "UnifiedParams":
        terms = np.asarray(terms, dtype=np.float64).reshape(6, -1)
        return cls(float(mu0), tuple(TermParams(*col) for col in terms.T.tolist()), snr_scale)

    def shifted(self, delta: float) -> "UnifiedParams":
        return UnifiedParams(self.mu0 + delta, self.terms, self.snr_scale)

    def permuted(self, order) -> "UnifiedParams":
        return UnifiedParams(self.mu0, tuple(self.terms[i] for i in order), self.snr_scale)

    def to_dict(self) -> dict:
        return {
            "model": "unified",
            "snr_scale": self.snr_scale,
            "mu0": self.mu0,
            "n_c": self.n_c,
            "terms": [
                dict(zip(("mu1", "mu2", "mu3", "mu4", "mu5", "mu6"), t.as_tuple()))
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnifiedParams":
        terms = tuple(
            TermParams(*(t[k] for k in ("mu1", "mu2", "mu3", "mu4", "mu5", "mu6")))
            for t in d["terms"]
        )
        if "n_c" in d and int(d["n_c"]) != len(terms):
            raise ValueError(f"n_c={d['n_c']} but {len(terms)} terms listed")
        return cls(d["mu0"], terms, d.get("snr_scale", "linear"))


@dataclass(frozen=True)
class TermIntermediates:
    sigma: float
    eta: float
    beta: float


@dataclass(frozen=True, eq=False)
class UnifiedGradient:
    """Gradient of the sum of squared residuals.

    ``terms`` is a (6, n_c) array laid out like :meth:`UnifiedParams.term_array`.
    """

    d_mu0: float
    terms: np.ndarray

    def __post_init__(self):
        arr = np.array(self.terms, dtype=np.float64).reshape(6, -1)
        arr.setflags(write=False)
        object.__setattr__(self, "terms", arr)
        object.__setattr__(self, "d_mu0", float(self.d_mu0))

    d_mu1 = property(lambda self: self.terms[0])
    d_mu2 = property(lambda self: self.terms[1])
    d_mu3 = property(lambda self: self.terms[2])
    d_mu4 = property(lambda self: self.terms[3])
    d_mu5 = property(lambda self: self.terms[4])
    d_mu6 = property(lambda self: self.terms[5])

    def groups(self) -> dict[str, np.ndarray]:
        out = {"mu0": np.array([self.d_mu0])}
        for r in range(6):
            out[f"mu{r + 1}"] = self.terms[r]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([[self.d_mu0], self.terms.ravel()])


def _sigmoid(arg):
    # arg is mu3*gamma + mu4; the exponent is its negation
    return 1.0 / (1.0 + np.exp(np.clip(-arg, -EXP_CLAMP, EXP_CLAMP)))


def _exp(arg):
    return np.exp(np.clip(arg, -EXP_CLAMP, EXP_CLAMP))


def term_intermediates(t: TermParams, gamma: float, rho: float,
                       snr_scale: str = "linear") -> TermIntermediates:
    x = snr_input(gamma, snr_scale)
    sigma = _sigmoid(t.mu3 * x + t.mu4)
    eta = _exp(t.mu5 * rho)
    return TermIntermediates(float(sigma), float(eta), float(eta + t.mu6 * rho))


def surface(mu0: float, terms: np.ndarray, x, rho, dtype=np.float64) -> np.ndarray:
    """Evaluate the model on broadcast arrays of model-scale SNR ``x`` and rho.

    Terms are accumulated in index order and mu0 is added last, so the result
    for any one cell does not depend on the shape of the inputs.  ``dtype``
    sets the working precision.
    """
    x = np.asarray(x, dtype=dtype)
    rho = np.asarray(rho, dtype=dtype)
    acc = np.zeros(np.broadcast_shapes(x.shape, rho.shape), dtype=dtype)
    terms = np.asarray(terms, dtype=dtype)
    for k in range(terms.shape[1]):
        mu1, mu2, mu3, mu4, mu5, mu6 = terms[:, k]
        sigma = _sigmoid(mu3 * x + mu4)
        beta = _exp(mu5 * rho) + mu6 * rho
        acc = acc + (mu1 + mu2 * sigma) * beta
    return acc + mu0


def eval_point(p: UnifiedParams, gamma: float, rho: float) -> float:
    """Model value at one SNR (dB) and compression ratio."""
    x = snr_input(np.array([[gamma]]), p.snr_scale)
    return float(surface(p.mu0, p.term_array(), x, np.array([[rho]]))[0, 0])


def eval_grid(p: UnifiedParams, grid: MetricGrid) -> np.ndarray:
    x = snr_input(grid.gamma_axis, p.snr_scale)
    return surface(p.mu0, p.term_array(), x[:, None], grid.rho_axis[None, :])


def residuals(p: UnifiedParams, grid: MetricGrid) -> np.ndarray:
    return grid.values - eval_grid(p, grid)


def sse(p: UnifiedParams, grid: MetricGrid) -> float:
    return float(np.sum(residuals(p, grid) ** 2))


def gradient_arrays(mu0: float, terms: np.ndarray, x: np.ndarray, rho: np.ndarray,
                    values: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Return (d_mu0, d_terms, sse) for the squared-error objective on a grid.

    ``x`` is the model-scale SNR axis.  Every per-cell contribution carries
    the factor -2 * eps_ij, with eps = Y - xi.
    """
    g = x[:, None, None]
    r = rho[None, :, None]
    mu1, mu2, mu3, mu4, mu5, mu6 = (row[None, None, :] for row in terms)

    sigma = _sigmoid(mu3 * g + mu4)
    eta = _exp(mu5 * r)
    beta = eta + mu6 * r
    amp = mu1 + mu2 * sigma

    xi = surface(mu0, terms, x[:, None], rho[None, :])
    eps = values - xi
    w = (-2.0 * eps)[:, :, None]

    dsig = beta * mu2 * sigma * (1.0 - sigma)
    d_terms = np.stack([
        np.sum(w * beta, axis=(0, 1)),
        np.sum(w * beta * sigma, axis=(0, 1)),
        np.sum(w * dsig * g, axis=(0, 1)),
        np.sum(w * dsig, axis=(0, 1)),
        np.sum(w * eta * r * amp, axis=(0, 1)),
        np.sum(w * r * amp, axis=(0, 1)),
    ]).reshape(6, -1)
    d_mu0 = float(np.sum(-2.0 * eps))
    return d_mu0, d_terms, float(np.sum(eps ** 2))


def jacobian_arrays(mu0: float, terms: np.ndarray, x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Derivative of every grid cell's model value with respect to every parameter.

    Rows follow the grid in row-major (gamma, rho) order.  Columns follow
    :meth:`UnifiedGradient.flat`: mu0, then mu1 for every term, mu2 for every
    term, and so on.
    """
    ng, nr = x.size, rho.size
    n_c = terms.shape[1]
    g = x[:, None, None]
    r = rho[None, :, None]
    mu1, mu2, mu3, mu4, mu5, mu6 = (row[None, None, :] for row in terms)
    full = np.ones((ng, nr, n_c))
    sigma = _sigmoid(mu3 * g + mu4) * full
    eta = _exp(mu5 * r) * full
    beta = eta + mu6 * r
    amp = mu1 + mu2 * sigma
    dsig = beta * mu2 * sigma * (1.0 - sigma)
    cols = [np.ones((ng, nr, 1)), beta, beta * sigma, dsig * g, dsig, eta * r * amp, r * amp]
    return np.concatenate(cols, axis=-1).reshape(ng * nr, 1 + 6 * n_c)


def analytic_gradient(p: UnifiedParams, grid: MetricGrid) -> UnifiedGradient:
    d_mu0, d_terms, _ = gradient_arrays(
        p.mu0, p.term_array(), snr_input(grid.gamma_axis, p.snr_scale), grid.rho_axis, grid.values
    )
    return UnifiedGradient(d_mu0, d_terms)


def finite_diff_gradient(p: UnifiedParams, grid: MetricGrid, h: float | None = None) -> UnifiedGradient:
    """Central-difference gradient of :func:`sse`.

    With ``h=None`` each parameter theta gets its own step
    ``max(1e-6 * |theta|, 1e-8)``.  The loss is evaluated in extended
    precision (``np.longdouble``), because in double precision the
    cancellation in ``f(theta+h) - f(theta-h)`` alone costs about 1e-6
    relative accuracy on the small gradient components.  On platforms where
    ``longdouble`` is plain double the estimate falls back to that accuracy.
    """
    if h is not None and not h > 0:
        raise ValueError("finite-difference step must be positive")
    ld = np.longdouble
    theta = np.concatenate([[p.mu0], p.term_array().ravel()]).astype(ld)
    n_c = p.n_c
    x = snr_input(grid.gamma_axis, p.snr_scale).astype(ld)[:, None]
    rho = grid.rho_axis.astype(ld)[None, :]
    values = grid.values.astype(ld)

    n = theta.size
    steps = np.empty(n, dtype=ld)
    for idx, value in enumerate(theta):
        steps[idx] = ld(h) if h is not None else max(ld(1e-6) * abs(value), ld(1e-8))
    # Row 2i is theta + h_i e_i and row 2i+1 is theta - h_i e_i; all rows
    # are evaluated in one broadcast pass.
    batch = np.repeat(theta[None, :], 2 * n, axis=0)
    batch[0::2][np.arange(n), np.arange(n)] += steps
    batch[1::2][np.arange(n), np.arange(n)] -= steps
    batch_terms = batch[:, 1:].reshape(2 * n, 6, n_c)
    loss = np.sum((values - surface(
        batch[:, 0, None, None], np.moveaxis(batch_terms, 0, -1)[..., None, None],
        x, rho, dtype=ld)) ** 2, axis=(1, 2))
    grad = ((loss[0::2] - loss[1::2]) / (2 * steps)).astype(np.float64)
    return UnifiedGradient(grad[0], grad[1:].reshape(6, n_c))


# Published fitted parameter sets.  Columns: mu0 (first row only), then per
# term mu1 mu2 mu3 mu4 (mu5 x 1e3) mu6.  The mu5 column is printed scaled by
# 1e3 and is divided back out on import.
_PUBLISHED = {
    "djscc-mse": ("-132.851", """
        325.366 -308.162 -2.900 -2.386 -267.139 0.000
        -206.275 549.240 2.640 -0.632 61.433 0.000
        -284.726 -194.664 -1.172 -0.607 -328.019 0.000
        -161.191 204.884 -0.080 1.757 38.637 0.000
        -65.899 61.225 2.840 5.172 222.567 0.000
        929.199 -1160.623 2.247 0.330 57.890 0.000
    """),
    "djscc-psnr": ("29.574", """
        36.649 -3.168 0.632 -3.436 -39.516 0.000
        -104.058 -4.692 0.156 -13.865 -12.833 0.000
        -11.463 65.229 2.657 3.110 22.610 0.000
        -55.011 -4.879 -0.433 1.825 19.184 0.000
        -26.117 28.747 -0.269 20.030 -7.904 0.000
        75.898 -14.652 -2.346 -2.705 -7.300 0.000
    """),
    "djscc-ssim": ("28.768", """
        126.256 -15.514 -1.740 19.184 -308.684 0.000
        55.943 -11.283 -0.996 0.955 19.585 0.000
        153.574 4.197 -0.213 -7.228 -701.928 0.000
        -206.346 16.021 -1.375 1.974 -548.854 0.000
        -37.987 6.056 0.664 5.817 -339.823 0.000
        -33.014 28.336 4.731 0.568 78.149 0.000
    """),
    "evit-accuracy": ("62.683", """
        -128.798 -7.955 0.859 2.765 -1.475 0.008
        -16.487 63.019 0.253 3.622 -11.792 0.166
        -124.914 4.798 4.230 1.162 -7.734 -0.069
        146.847 20.979 -1.989 -0.866 -14.133 -0.112
        20.938 -106.143 -3.172 -2.294 5.252 0.113
        63.187 15.759 0.622 4.974 2.075 -0.000
    """),
    "evit-precision": ("62.695", """
        -128.788 -8.028 0.859 2.765 -1.316 0.008
        -16.544 62.923 0.253 3.621 -12.244 0.166
        -124.869 4.712 4.230 1.162 -8.155 -0.069
        146.910 21.145 -1.989 -0.866 -13.233 -0.112
        20.899 -106.007 -3.172 -2.294 4.992 0.112
        63.198 15.761 0.622 4.974 2.005 -0.000
    """),
    "evit-recall": ("62.667", """
        -128.816 -7.989 0.859 2.765 -0.928 0.008
        -16.551 62.961 0.253 3.622 -12.896 0.166
        -124.907 4.735 4.230 1.162 -8.707 -0.069
        146.867 21.114 -1.989 -0.866 -11.932 -0.113
        20.886 -106.115 -3.172 -2.294 4.889 0.112
        63.170 15.741 0.622 4.974 1.814 -0.000
    """),
}

PUBLISHED_SETS = tuple(_PUBLISHED)


def published_params(name: str) -> UnifiedParams:
    """Published six-term parameter set for one of the reference tables.

    These were fitted against linear SNR, so the returned set uses
    ``snr_scale="linear"``.
    """
    mu0, rows = published_source(name)
    terms = []
    for row in rows:
        mu1, mu2, mu3, mu4, mu5_scaled, mu6 = (float(c) for c in row)
        terms.append(TermParams(mu1, mu2, mu3, mu4, mu5_scaled / 1e3, mu6))
    return UnifiedParams(float(mu0), tuple(terms))


def published_source(name: str) -> tuple[str, list[list[str]]]:
    """Verbatim decimal text of a published set: (mu0, per-term rows).

    Each row holds mu1, mu2, mu3, mu4, mu5 x 1e3, mu6 as printed.
    """
    if name not in _PUBLISHED:
        raise KeyError(f"no published parameters for {name!r}; available: {', '.join(PUBLISHED_SETS)}")
    mu0, text = _PUBLISHED[name]
    return mu0, [line.split() for line in text.strip().splitlines()]
