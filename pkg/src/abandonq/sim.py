"""Monte Carlo oracle: simulate the offered-waiting-time recursion.

For customer n with offered wait xi, service s, patience y and next
inter-arrival t:

    xi' = (xi + s - t)^+   if y > xi + s   (served)
          (xi - t)^+       if y < xi       (abandons while waiting)
          (y - t)^+        otherwise       (abandons during service)
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .measures import (AbandonmentProb, AvgQueueLength, Custom, OfferedSojourn,
                       OfferedWait, TailWait, WaitingAbandonment)

CHUNK = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    n: int = 10**6
    burn_in: int = 10**5
    seed: int = 0
    estimator: str = "rao_blackwell"  # or "direct_event"

    def __post_init__(self):
        if self.n < 1 or self.burn_in < 0:
            raise ValueError("need n >= 1 and burn_in >= 0")
        if self.estimator not in ("rao_blackwell", "direct_event"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass
class SamplePath:
    xi: np.ndarray
    s: np.ndarray = None
    y: np.ndarray = None


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    @property
    def ci95(self):
        return (self.value - 1.959963984540054 * self.stderr,
                self.value + 1.959963984540054 * self.stderr)

    @property
    def ci99(self):
        return (self.value - 2.5758293035489 * self.stderr,
                self.value + 2.5758293035489 * self.stderr)


@njit(cache=True)
def _recurse(xi, s, y, t, out):
    for i in range(s.size):
        out[i] = xi
        top = y[i] if y[i] > xi else xi
        end = xi + s[i]
        if top < end:
            end = top
        xi = end - t[i]
        if xi < 0.0:
            xi = 0.0
    return xi


def simulate_chain(queue, mu, cfg, keep_events=None):
    """Sample path of offered waits after ``cfg.burn_in`` steps, starting from 0.

    Service, patience and the next inter-arrival of each customer are kept
    alongside when ``keep_events`` is true (default: when the configured
    estimator needs them).
    """
    if keep_events is None:
        keep_events = cfg.estimator == "direct_event"
    rng = np.random.default_rng(cfg.seed)
    total = cfg.burn_in + cfg.n
    xi_out = np.empty(cfg.n)
    s_out = np.empty(cfg.n) if keep_events else None
    y_out = np.empty(cfg.n) if keep_events else None
    xi = 0.0
    pos = 0
    while pos < total:
        m = min(CHUNK, total - pos)
        t = np.asarray(queue.arrival.sample(rng, m), dtype=float)
        s = rng.exponential(1.0 / mu, m)
        y = np.asarray(queue.patience.sample(rng, m), dtype=float)
        buf = np.empty(m)
        xi = _recurse(xi, s, y, t, buf)
        lo = max(cfg.burn_in - pos, 0)
        if lo < m:
            dst = slice(pos + lo - cfg.burn_in, pos + m - cfg.burn_in)
            xi_out[dst] = buf[lo:]
            if keep_events:
                s_out[dst] = s[lo:]
                y_out[dst] = y[lo:]
        pos += m
    return SamplePath(xi_out, s_out, y_out)


def batch_means(values, n_batches=None):
    """Point estimate and batch-means standard error (ceil(sqrt(n)) batches)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    nb = n_batches or math.ceil(math.sqrt(n))
    size = n // nb
    if size < 1 or nb < 2:
        return Estimate(float(values.mean()), math.nan)
    means = values[: nb * size].reshape(nb, size).mean(axis=1)
    return Estimate(float(values.mean()), float(means.std(ddof=1) / math.sqrt(nb)))


def _direct_event(kind, queue, path, mu):
    if path.s is None:
        raise ValueError("direct-event estimates need a path simulated with keep_events=True")
    xi, s, y = path.xi, path.s, path.y
    if isinstance(kind, AbandonmentProb):
        return (y <= xi + s).astype(float)
    if isinstance(kind, OfferedSojourn):
        return xi + s
    if isinstance(kind, TailWait):
        return (xi + s > kind.threshold).astype(float)
    if isinstance(kind, AvgQueueLength):
        return queue.intensity * np.minimum(y, xi + s)
    if isinstance(kind, OfferedWait):
        return xi
    if isinstance(kind, WaitingAbandonment):
        return (y < xi).astype(float)
    if isinstance(kind, Custom):
        return kind.h(np.minimum(xi + s, queue.bound))
    raise TypeError(f"no direct-event estimator for {kind.name}")


def estimate_measures(path, queue, mu, kinds, estimator="rao_blackwell"):
    """Map measure name -> Estimate from one sample path."""
    if path.xi.size < 1000:
        raise ValueError("need at least 1000 post-burn-in samples")
    out = {}
    for kind in kinds:
        if estimator == "rao_blackwell":
            vals = kind.g(queue, path.xi, mu)
        else:
            vals = _direct_event(kind, queue, path, mu)
        out[kind.name] = batch_means(vals)
    return out


def simulate_measures(queue, mu, kinds, cfg):
    path = simulate_chain(queue, mu, cfg)
    return estimate_measures(path, queue, mu, kinds, cfg.estimator)
