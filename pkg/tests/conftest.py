import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from abandonq.distributions import (Erlang, Exponential, Gamma, MixtureExponential, PointMass,
                                    TruncatedMixtureExponential, Uniform, UniformPatience)
from abandonq.model import QueueSpec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def _weights(n):
    return st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n).map(
        lambda w: tuple(float(x) for x in np.asarray(w) / np.sum(w)))


@st.composite
def arrivals(draw):
    kind = draw(st.sampled_from(["exp", "mix", "erlang", "gamma", "uniform"]))
    rate = draw(st.floats(2.0, 40.0))
    if kind == "exp":
        return Exponential(rate)
    if kind == "mix":
        n = draw(st.integers(2, 3))
        w = draw(_weights(n))
        rates = tuple(rate * draw(st.floats(0.2, 5.0)) for _ in range(n))
        return MixtureExponential(w, rates)
    if kind == "erlang":
        k = draw(st.integers(1, 4))
        return Erlang(k, k * rate)
    if kind == "gamma":
        shape = draw(st.sampled_from([1.0, 2.0, 2.5, 3.7]))
        return Gamma(shape, 1.0 / (shape * rate))
    lo = draw(st.floats(0.0, 0.5)) / rate
    return Uniform(lo, lo + 2.0 / rate)


@st.composite
def patiences(draw, bound=None):
    ybar = bound or draw(st.floats(1.0, 25.0))
    kind = draw(st.sampled_from(["mix", "uniform", "point"]))
    if kind == "mix":
        n = draw(st.integers(1, 3))
        w = draw(_weights(n))
        rates = tuple(draw(st.floats(0.2, 5.0)) for _ in range(n))
        return TruncatedMixtureExponential(w, rates, ybar)
    if kind == "uniform":
        return UniformPatience(ybar)
    return PointMass(ybar)


@st.composite
def queues(draw):
    return QueueSpec(draw(arrivals()), draw(patiences()), "h")


def random_queue(rng, closed_form=True, ybar=None):
    """Plain-numpy generator used by loops that are too slow for hypothesis shrinking."""
    lam = float(np.exp(rng.uniform(np.log(3), np.log(30))))
    if closed_form or rng.random() < 0.5:
        w = rng.dirichlet(np.ones(2))
        scv = rng.uniform(1.0, 3.0)
        p = 0.5 * (1 + np.sqrt((scv - 1) / (scv + 1)))
        arrival = MixtureExponential((p, 1 - p), (2 * p * lam, 2 * (1 - p) * lam))
    else:
        arrival = Erlang(int(rng.integers(2, 4)), lam * 2)
    ybar = ybar or float(rng.uniform(2.0, 25.0))
    w = rng.dirichlet(np.ones(3))
    rates = tuple(float(x) for x in rng.uniform(0.3, 5.0, 3))
    patience = TruncatedMixtureExponential(tuple(float(x) for x in w / w.sum()), rates, ybar)
    return QueueSpec(arrival, patience, "r")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
