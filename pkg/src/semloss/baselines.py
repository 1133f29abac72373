"""One-dimensional comparison models over SNR at a fixed compression ratio.

    generalized sigmoid:  k1 + k2 / (1 + exp(k3 * x + k4))
    sum of exponentials:  k5 * exp(k6 * x) + k7 * exp(k8 * x) + k9

Neither model reads rho.  As in :mod:`semloss.unified`, ``x`` is the SNR on
the parameter set's ``snr_scale`` (linear power ratio by default) and the
public functions take dB.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .dataset import SNR_SCALES, MetricSlice, snr_input
from .unified import EXP_CLAMP

__all__ = [
    "GSigmoidParams",
    "SumExpParams",
    "eval_gsigmoid",
    "eval_sumexp",
    "gradient_gsigmoid",
    "gradient_sumexp",
    "baseline_from_dict",
]


class _Baseline:
    kind = ""
    names: tuple[str, ...] = ()

    def __post_init__(self):
        for name in self.names:
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.snr_scale not in SNR_SCALES:
            raise ValueError(f"unknown SNR scale {self.snr_scale!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names])

    @classmethod
    def from_array(cls, values, snr_scale: str = "linear"):
        return cls(*np.asarray(values, dtype=np.float64).tolist(), snr_scale=snr_scale)

    def to_dict(self) -> dict:
        out = {"model": self.kind, "snr_scale": self.snr_scale}
        out.update({n: getattr(self, n) for n in self.names})
        return out


@dataclass(frozen=True)
class GSigmoidParams(_Baseline):
    k1: float
    k2: float
    k3: float
    k4: float
    snr_scale: str = "linear"

    kind = "gsigmoid"
    names = ("k1", "k2", "k3", "k4")


@dataclass(frozen=True)
class SumExpParams(_Baseline):
    k5: float
    k6: float
    k7: float
    k8: float
    k9: float
    snr_scale: str = "linear"

    kind = "sumexp"
    names = ("k5", "k6", "k7", "k8", "k9")


def baseline_from_dict(d: dict):
    kinds = {"gsigmoid": GSigmoidParams, "sumexp": SumExpParams}
    try:
        cls = kinds[d["model"]]
    except KeyError:
        raise ValueError(f"not a baseline parameter set: model={d.get('model')!r}") from None
    return cls(*(d[n] for n in cls.names), snr_scale=d.get("snr_scale", "linear"))


def _exp(arg):
    return np.exp(np.clip(arg, -EXP_CLAMP, EXP_CLAMP))


# Array-level kernels on model-scale SNR; k is the parameter vector.

def gsigmoid_values(k, x):
    q = 1.0 / (1.0 + _exp(k[2] * x + k[3]))
    return k[0] + k[1] * q


def gsigmoid_grad(k, x, y):
    """(gradient, sse) of sum((y - f(x))**2) for the generalized sigmoid."""
    q = 1.0 / (1.0 + _exp(k[2] * x + k[3]))
    eps = y - (k[0] + k[1] * q)
    w = -2.0 * eps
    # dq/d(arg) = -q(1-q)
    dq = -q * (1.0 - q) * k[1]
    grad = np.array([w.sum(), (w * q).sum(), (w * dq * x).sum(), (w * dq).sum()])
    return grad, float(np.sum(eps ** 2))


def gsigmoid_jacobian(k, x):
    """Per-point derivatives of the generalized sigmoid, one column per kappa."""
    q = 1.0 / (1.0 + _exp(k[2] * x + k[3]))
    dq = -q * (1.0 - q) * k[1]
    return np.column_stack([np.ones_like(x), q, dq * x, dq])


def sumexp_values(k, x):
    return k[0] * _exp(k[1] * x) + k[2] * _exp(k[3] * x) + k[4]


def sumexp_grad(k, x, y):
    """(gradient, sse) of sum((y - f(x))**2) for the sum of exponentials."""
    a = _exp(k[1] * x)
    b = _exp(k[3] * x)
    eps = y - (k[0] * a + k[2] * b + k[4])
    w = -2.0 * eps
    grad = np.array([
        (w * a).sum(),
        (w * k[0] * a * x).sum(),
        (w * b).sum(),
        (w * k[2] * b * x).sum(),
        w.sum(),
    ])
    return grad, float(np.sum(eps ** 2))


def sumexp_jacobian(k, x):
    """Per-point derivatives of the sum of exponentials, one column per kappa."""
    a = _exp(k[1] * x)
    b = _exp(k[3] * x)
    return np.column_stack([a, k[0] * a * x, b, k[2] * b * x, np.ones_like(x)])


def eval_gsigmoid(p: GSigmoidParams, gamma):
    """Evaluate at SNR ``gamma`` in dB (scalar or array)."""
    out = gsigmoid_values(p.as_array(), snr_input(gamma, p.snr_scale))
    return float(out) if np.ndim(out) == 0 else out


def eval_sumexp(p: SumExpParams, gamma):
    """Evaluate at SNR ``gamma`` in dB (scalar or array)."""
    out = sumexp_values(p.as_array(), snr_input(gamma, p.snr_scale))
    return float(out) if np.ndim(out) == 0 else out


def gradient_gsigmoid(p: GSigmoidParams, s: MetricSlice) -> np.ndarray:
    return gsigmoid_grad(p.as_array(), snr_input(s.gamma_axis, p.snr_scale), s.values)[0]


def gradient_sumexp(p: SumExpParams, s: MetricSlice) -> np.ndarray:
    return sumexp_grad(p.as_array(), snr_input(s.gamma_axis, p.snr_scale), s.values)[0]


def slice_sse(p, s: MetricSlice) -> float:
    f = eval_gsigmoid if isinstance(p, GSigmoidParams) else eval_sumexp
    return float(np.sum((s.values - f(p, s.gamma_axis)) ** 2))
