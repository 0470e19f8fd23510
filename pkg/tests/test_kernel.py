import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from abandonq.distributions import (Erlang, Exponential, Gamma, MixtureExponential, PointMass,
                                    TruncatedMixtureExponential, Uniform, UniformPatience)
from abandonq.kernel import KernelContext, cut_points, kernel_eval, kernel_grid, state_grid
from abandonq.model import QueueSpec

from .conftest import queues


def tau_over_arrival(arrival, patience, mu, x, u):
    """Independent oracle: condition on the inter-arrival time t instead of the patience.

    Given t, the next offered wait is <= x iff u <= x + t and either the
    patience has run out by x + t or the service ends by x + t.
    """
    if x >= patience.bound:
        return 1.0
    lo = max(0.0, u - x)

    def f(t):
        alive = patience.sf(x + t)
        return arrival.pdf(t) * (1.0 - alive * math.exp(-mu * (x + t - u)))

    pts = {lo, max(lo, patience.bound - x)}
    for _, _, plo, phi in arrival.density_pieces() or ():
        pts |= {max(lo, plo), max(lo, phi)}
    brk = sorted(pts) + [np.inf]
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        if b > a:
            total += quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total


def test_point_mass_example():
    ctx = KernelContext(Exponential(1.0), PointMass(1.0), 1.0)
    expected = (1 - math.exp(-2)) / 2 + math.exp(-2)
    assert kernel_eval(ctx, 0.0, 0.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.567668, abs=1e-6)


@given(queues(), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.3, 3.0))
def test_kernel_matches_arrival_conditioning_oracle(q, xf, uf, mu_ratio):
    mu = mu_ratio * q.intensity
    x, u = xf * q.bound, uf * q.bound
    ctx = KernelContext.for_queue(q, mu)
    ref = tau_over_arrival(q.arrival, q.patience, mu, x, u)
    assert kernel_eval(ctx, x, u) == pytest.approx(ref, abs=1e-8)


@given(queues(), st.floats(0.0, 1.0), st.floats(0.3, 3.0))
def test_kernel_is_one_at_and_above_bound(q, uf, mu_ratio):
    ctx = KernelContext.for_queue(q, mu_ratio * q.intensity)
    u = uf * q.bound
    assert abs(kernel_eval(ctx, q.bound, u) - 1.0) <= 1e-8
    assert kernel_eval(ctx, q.bound * 1.5, u) == 1.0


@given(queues(), st.floats(0.3, 3.0), st.floats(0.0, 1.0))
def test_kernel_monotone_in_x(q, mu_ratio, uf):
    ctx = KernelContext.for_queue(q, mu_ratio * q.intensity)
    x = np.linspace(0, q.bound, 200)
    vals = np.array([kernel_eval(ctx, xi, uf * q.bound) for xi in x])
    assert np.all(np.diff(vals) >= -1e-10)


def test_kernel_monotone_random_pairs():
    rng = np.random.default_rng(5)
    q = QueueSpec(MixtureExponential((0.4, 0.6), (3.0, 12.0)),
                  TruncatedMixtureExponential((0.5, 0.5), (1.0, 3.0), 1.0))
    for _ in range(100):
        u, mu = rng.uniform(0, 1), rng.uniform(1, 20)
        ctx = KernelContext.for_queue(q, mu)
        assert kernel_eval(ctx, 0.2, u) <= kernel_eval(ctx, 0.7, u) + 1e-14


def test_kernel_lipschitz_in_mu():
    rng = np.random.default_rng(11)
    q = QueueSpec(Gamma(2.5, 0.05), TruncatedMixtureExponential((0.3, 0.7), (0.5, 2.0), 4.0))
    mu_min = 2.0
    for _ in range(20):
        x, u = rng.uniform(0, 4, 2)
        m1, m2 = rng.uniform(mu_min, 30.0, 2)
        a = kernel_eval(KernelContext.for_queue(q, m1, method="quadrature"), x, u)
        b = kernel_eval(KernelContext.for_queue(q, m2, method="quadrature"), x, u)
        assert abs(a - b) <= abs(m1 - m2) / (mu_min * math.e) + 1e-10


def test_kernel_agrees_with_monte_carlo():
    rng = np.random.default_rng(2024)
    q = QueueSpec(MixtureExponential((0.7, 0.3), (14.0, 2.0)),
                  TruncatedMixtureExponential((0.6, 0.4), (2.0, 0.5), 3.0))
    n = 10**6
    for _ in range(20):
        x, u = rng.uniform(0, 3, 2)
        mu = rng.uniform(2.0, 15.0)
        t = q.arrival.sample(rng, n)
        s = rng.exponential(1 / mu, n)
        y = q.patience.sample(rng, n)
        nxt = np.maximum(np.minimum(u + s, np.maximum(y, u)) - t, 0.0)
        p = float(np.mean(nxt <= x))
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / n)
        assert abs(kernel_eval(KernelContext.for_queue(q, mu), x, u) - p) <= 4 * sigma + 1e-12


@pytest.mark.parametrize("arrival", [MixtureExponential((0.5, 0.5), (3.0, 9.0)),
                                     Uniform(0.05, 0.4), Exponential(5.0)])
def test_closed_form_matches_quadrature(arrival):
    q = QueueSpec(arrival, TruncatedMixtureExponential((0.2, 0.8), (0.7, 2.5), 2.0))
    closed = KernelContext.for_queue(q, 4.0, method="closed")
    numeric = KernelContext.for_queue(q, 4.0, method="quadrature")
    for x in np.linspace(0, 2, 9):
        for u in np.linspace(0, 2, 9):
            assert kernel_eval(closed, x, u) == pytest.approx(kernel_eval(numeric, x, u),
                                                             abs=1e-9)


@pytest.mark.parametrize("scheme", ["upper", "midpoint"])
@pytest.mark.parametrize("arrival", [Gamma(2.5, 0.05), Erlang(2, 10.0)])
def test_grid_matches_scalar_kernel(scheme, arrival):
    q = QueueSpec(arrival, UniformPatience(3.0))
    ctx = KernelContext.for_queue(q, 6.0)
    r = 4
    T = kernel_grid(ctx, r, scheme)
    c, x = state_grid(3.0, r), cut_points(3.0, r, scheme)
    for i in range(0, c.size, 3):
        for j in range(x.size):
            assert T[i, j] == pytest.approx(kernel_eval(ctx, x[j], c[i]), abs=1e-9)


def test_u_above_bound_is_clamped():
    ctx = KernelContext(Exponential(2.0), UniformPatience(1.0), 3.0)
    assert kernel_eval(ctx, 0.4, 1.0 + 1e-13) == pytest.approx(kernel_eval(ctx, 0.4, 1.0),
                                                               abs=1e-12)
