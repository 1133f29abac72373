import math

import numpy as np
import pytest

from semloss import FitConfig, MetricGrid

SYN_GAMMA = np.arange(-8.0, 9.0, 2.0)
SYN_RHO = np.array([2.0, 4.0, 6.0, 8.0, 12.0])

# Small budgets for unit tests; acceptance tests use the defaults.
QUICK = FitConfig(n_starts=2, max_iters=2_000, baseline_starts=4, baseline_iters=2_000,
                  refine_max_nfev=200)


def direct_xi(mu0, terms, gamma_db, rho):
    """Scalar reference evaluation of the surface model with plain ``math``.

    ``terms`` is a sequence of (mu1..mu6) tuples; SNR enters as a linear ratio.
    """
    x = 10.0 ** (gamma_db / 10.0)
    total = 0.0
    for mu1, mu2, mu3, mu4, mu5, mu6 in terms:
        arg = min(max(-mu3 * x - mu4, -500.0), 500.0)
        sig = 1.0 / (1.0 + math.exp(arg))
        beta = math.exp(min(max(mu5 * rho, -500.0), 500.0)) + mu6 * rho
        total += (mu1 + mu2 * sig) * beta
    return total + mu0


def synthetic_grid(params, gamma=SYN_GAMMA, rho=SYN_RHO, name="synthetic") -> MetricGrid:
    terms = [t.as_tuple() for t in params.terms]
    values = [[direct_xi(params.mu0, terms, g, r) for r in rho] for g in gamma]
    return MetricGrid(name, gamma, rho, np.array(values))


@pytest.fixture
def quick_cfg():
    return QUICK
