"""Jitted full-batch gradient descent loop for the unified surface model."""
import math

import numba
import numpy as np

CLAMP = 500.0


@numba.njit(cache=True)
def _clamp(v):
    return min(max(v, -CLAMP), CLAMP)


@numba.njit(cache=True)
def _sse_and_grad(values, x, rho, mu0, P, sig, eta, beta, grad, g0):
    """Accumulate the gradient of the squared error into ``grad``/``g0``.

    Returns (sse, g0).  ``grad`` is added to, not overwritten.
    """
    ng, nr = values.shape
    nc = P.shape[1]
    for i in range(ng):
        for k in range(nc):
            sig[i, k] = 1.0 / (1.0 + math.exp(_clamp(-P[2, k] * x[i] - P[3, k])))
    for j in range(nr):
        for k in range(nc):
            eta[j, k] = math.exp(_clamp(P[4, k] * rho[j]))
            beta[j, k] = eta[j, k] + P[5, k] * rho[j]

    total = 0.0
    for i in range(ng):
        for j in range(nr):
            acc = 0.0
            for k in range(nc):
                acc += (P[0, k] + P[1, k] * sig[i, k]) * beta[j, k]
            eps = values[i, j] - (acc + mu0)
            total += eps * eps
            w = -2.0 * eps
            for k in range(nc):
                s = sig[i, k]
                b = beta[j, k]
                amp = P[0, k] + P[1, k] * s
                dsig = w * b * P[1, k] * s * (1.0 - s)
                grad[0, k] += w * b
                grad[1, k] += w * b * s
                grad[2, k] += dsig * x[i]
                grad[3, k] += dsig
                grad[4, k] += w * eta[j, k] * rho[j] * amp
                grad[5, k] += w * rho[j] * amp
            g0 += w
    return total, g0


@numba.njit(cache=True)
def step_once(values, x, rho, mu0, P, alphas):
    """One descent update in place on ``P``; returns (new mu0, sse before)."""
    ng, nr = values.shape
    nc = P.shape[1]
    sig = np.empty((ng, nc))
    eta = np.empty((nr, nc))
    beta = np.empty((nr, nc))
    grad = np.zeros((6, nc))
    total, g0 = _sse_and_grad(values, x, rho, mu0, P, sig, eta, beta, grad, 0.0)
    for r in range(6):
        for k in range(nc):
            P[r, k] -= alphas[r + 1] * grad[r, k]
    return mu0 - alphas[0] * g0, total


@numba.njit(cache=True, nogil=True)
def descend(values, x, rho, mu0, P, alphas, max_iters, rel_tol, patience,
            reset, every, curve):
    """Run the descent loop, updating ``P`` in place.

    The loss before iteration ``it`` is written to ``curve[it // every]``
    whenever ``it % every == 0``.  Returns
    (mu0, iterations, converged, diverged, n_curve).
    """
    ng, nr = values.shape
    nc = P.shape[1]
    sig = np.empty((ng, nc))
    eta = np.empty((nr, nc))
    beta = np.empty((nr, nc))
    grad = np.zeros((6, nc))
    g0 = 0.0
    prev = np.inf
    quiet = 0
    n_curve = 0
    for it in range(max_iters):
        if reset:
            grad[:, :] = 0.0
            g0 = 0.0
        total, g0 = _sse_and_grad(values, x, rho, mu0, P, sig, eta, beta, grad, g0)
        if it % every == 0:
            curve[n_curve] = total
            n_curve += 1
        if not math.isfinite(total):
            return mu0, it, False, True, n_curve
        if abs(prev - total) <= rel_tol * max(abs(prev), 1e-300):
            quiet += 1
            if quiet >= patience:
                return mu0, it, True, False, n_curve
        else:
            quiet = 0
        prev = total
        mu0 -= alphas[0] * g0
        for r in range(6):
            for k in range(nc):
                P[r, k] -= alphas[r + 1] * grad[r, k]
    return mu0, max_iters, False, False, n_curve


GSIGMOID = 0
SUMEXP = 1


@numba.njit(cache=True)
def baseline_sse_grad(kind, k, x, y, grad):
    """Squared error of a one-dimensional baseline; gradient into ``grad``."""
    grad[:] = 0.0
    total = 0.0
    for i in range(x.shape[0]):
        if kind == GSIGMOID:
            q = 1.0 / (1.0 + math.exp(_clamp(k[2] * x[i] + k[3])))
            eps = y[i] - (k[0] + k[1] * q)
            w = -2.0 * eps
            dq = -q * (1.0 - q) * k[1]
            grad[0] += w
            grad[1] += w * q
            grad[2] += w * dq * x[i]
            grad[3] += w * dq
        else:
            a = math.exp(_clamp(k[1] * x[i]))
            b = math.exp(_clamp(k[3] * x[i]))
            eps = y[i] - (k[0] * a + k[2] * b + k[4])
            w = -2.0 * eps
            grad[0] += w * a
            grad[1] += w * k[0] * a * x[i]
            grad[2] += w * b
            grad[3] += w * k[2] * b * x[i]
            grad[4] += w
        total += eps * eps
    return total


@numba.njit(cache=True, nogil=True)
def descend_baseline(kind, k, x, y, max_iters, rel_tol, patience):
    """Gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    Updates ``k`` in place; returns (sse, iterations, converged).
    """
    n = k.shape[0]
    g = np.empty(n)
    g_new = np.empty(n)
    trial = np.empty(n)
    loss = baseline_sse_grad(kind, k, x, y, g)
    if not math.isfinite(loss):
        return loss, 0, False
    step = 1e-4
    quiet = 0
    for it in range(max_iters):
        gg = 0.0
        for m in range(n):
            gg += g[m] * g[m]
        if gg == 0.0:
            return loss, it, True
        while True:
            for m in range(n):
                trial[m] = k[m] - step * g[m]
            loss_new = baseline_sse_grad(kind, trial, x, y, g_new)
            if math.isfinite(loss_new) and loss_new <= loss - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-300:
                return loss, it, True
        ss = 0.0
        sy = 0.0
        for m in range(n):
            s = trial[m] - k[m]
            ss += s * s
            sy += s * (g_new[m] - g[m])
            k[m] = trial[m]
            g[m] = g_new[m]
        if loss - loss_new <= rel_tol * loss:
            quiet += 1
        else:
            quiet = 0
        loss = loss_new
        if quiet >= patience:
            return loss, it + 1, True
        step = ss / sy if sy > 0 else step * 2.0
    return loss, max_iters, False
