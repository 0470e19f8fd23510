import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from abandonq.distributions import Exponential, TruncatedMixtureExponential, UniformPatience
from abandonq.fluid import fluid_measures, fluid_offered_wait
from abandonq.measures import AbandonmentProb, OfferedSojourn, TailWait
from abandonq.model import QueueSpec

from .conftest import patiences


def test_uniform_inverse():
    q = QueueSpec(Exponential(2.0), UniformPatience(1.0))
    res = fluid_offered_wait(q, 1.0)
    assert res.regime == "overloaded"
    assert res.w_fluid == pytest.approx(0.5, abs=1e-11)


def test_underloaded_is_zero():
    q = QueueSpec(Exponential(2.0), UniformPatience(1.0))
    assert fluid_offered_wait(q, 2.0).w_fluid == 0.0
    assert fluid_offered_wait(q, 5.0).regime == "underloaded"


def test_fluid_measure_examples():
    q = QueueSpec(Exponential(2.0), UniformPatience(1.0))
    out = fluid_measures(q, 1.0, [OfferedSojourn(), TailWait(0.5)])
    assert out["offered_sojourn"] == pytest.approx(1.5, abs=1e-11)
    assert out["tail_wait"] == pytest.approx(1.0, abs=1e-11)


def test_underloaded_abandonment_is_service_average_of_g():
    g = TruncatedMixtureExponential((0.5, 0.5), (1.0, 4.0), 3.0)
    q = QueueSpec(Exponential(2.0), g)
    mu = 6.0
    ref = quad(lambda s: mu * math.exp(-mu * s) * float(g.cdf(s)), 0, 3.0, epsabs=1e-14)[0] \
        + math.exp(-mu * 3.0)
    assert fluid_measures(q, mu, [AbandonmentProb()])["abandonment"] == pytest.approx(ref,
                                                                                       abs=1e-10)


@given(patiences(), st.floats(1.0, 50.0))
def test_nonincreasing_in_mu(patience, lam):
    q = QueueSpec(Exponential(lam), patience)
    w = [fluid_offered_wait(q, mu).w_fluid for mu in np.linspace(0.01 * lam, 1.2 * lam, 40)]
    assert np.all(np.diff(w) <= 1e-12)
    assert all(0 <= x <= patience.bound for x in w)


@given(patiences(), st.floats(0.01, 0.99))
def test_generalized_inverse_brackets_target(patience, ratio):
    q = QueueSpec(Exponential(1.0), patience)
    res = fluid_offered_wait(q, ratio)
    target = 1 - ratio
    w = res.w_fluid
    assert float(patience.cdf(w)) >= target - 1e-12
    if w > 0:
        assert float(patience.cdf(w - 1e-9)) <= target + 1e-9
