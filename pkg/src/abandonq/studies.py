"""Reproducible experiment pipelines on synthetic waitlists.

All outputs are long-format row lists (dicts) so the CLI can write them as
CSV without further reshaping.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import brentq

from .chain import EVAL_SCHEME
from .distributions import (Exponential, MixtureExponential, TruncatedMixtureExponential,
                            moment_match_hyperexp2)
from .errors import Infeasible, SchemaError
from .fluid import fluid_measures
from .measures import (AbandonmentProb, OfferedSojourn, OfferedWait, WaitingAbandonment,
                       finite_measures)
from .model import QueueSpec
from .optimizer import SUPPLY_RATIO, SizingProblem, build_equity_model, run_algorithm1
from .sim import SimConfig, simulate_measures

log = logging.getLogger(__name__)

STUDIES = ("eval_error", "equity_frontier", "cluster_analysis", "markovian")
BANDS = ((0.0, 0.01, "<1%"), (0.01, 0.05, "1-5%"), (0.05, 0.10, "5-10%"),
         (0.10, 0.25, "10-25%"), (0.25, math.inf, ">25%"))
SIM_FLOOR = 1e-12


@dataclass
class StudySpec:
    study: str = "eval_error"
    count: int = 20
    intensity_range: tuple = (5.0, 50.0)
    scv_range: tuple = (1.2, 3.0)
    patience_mean_range: tuple = (0.4, 1.2)
    ybar: float = 25.0
    seed: int = 0
    r: int = 12
    scheme: str = EVAL_SCHEME
    sim_n: int = 10**7
    burn_in: int = 10**5
    knots: int = 7
    eps: float = 1e-3
    measure: str = "offered_sojourn"
    frontier_points: int = 4
    p_weights: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)

    def __post_init__(self):
        if self.study not in STUDIES:
            raise SchemaError(f"unknown study {self.study!r}", field="study")
        if self.count < 0:
            raise SchemaError("count must be >= 0", field="count")
        for name in ("intensity_range", "scv_range", "patience_mean_range", "p_weights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        extra = sorted(set(d) - names)
        if extra:
            raise SchemaError(f"unknown study keys {extra}", field=extra[0])
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


# ------------------------------------------------------------------ generator


def truncated_mixture_with_mean(weights, rates, bound, target):
    """Scale all rates by one factor so that E[min(Y, bound)] equals ``target``."""
    def gap(log_scale):
        s = math.exp(log_scale)
        return TruncatedMixtureExponential(weights, tuple(r * s for r in rates), bound).mean - target

    if not 0 < target < bound:
        raise ValueError("target mean must lie in (0, bound)")
    log_s = brentq(gap, -30.0, 30.0, xtol=1e-14)
    return TruncatedMixtureExponential(weights, tuple(r * math.exp(log_s) for r in rates), bound)


def synthetic_queues(count, seed=0, intensity_range=(5.0, 50.0), scv_range=(1.2, 3.0),
                     patience_mean_range=(0.4, 1.2), ybar=25.0):
    """H2 inter-arrivals and 3-phase truncated-exponential patience."""
    rng = np.random.default_rng(seed)
    out = []
    lo, hi = np.log(intensity_range[0]), np.log(intensity_range[1])
    for k in range(count):
        lam = float(np.exp(rng.uniform(lo, hi)))
        scv = float(rng.uniform(*scv_range))
        mean_pat = float(rng.uniform(*patience_mean_range))
        weights = rng.dirichlet(np.ones(3))
        # spread phase means over roughly two decades before rescaling
        rel_means = np.sort(np.exp(rng.uniform(np.log(0.1), np.log(10.0), 3)))
        weights = tuple(float(w) for w in weights / weights.sum())
        patience = truncated_mixture_with_mean(weights, tuple(1.0 / rel_means), ybar, mean_pat)
        arrival = moment_match_hyperexp2(1.0 / lam, scv)
        out.append(QueueSpec(arrival, patience, f"q{k:03d}",
                             {"intensity": lam, "scv": scv, "mean_patience": mean_pat}))
    return out


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# ------------------------------------------------------------------ evaluation error


def rel_error(value, ref):
    if abs(ref) < SIM_FLOOR:
        return abs(value - ref), True
    return abs(value - ref) / abs(ref), False


def band_of(err):
    for lo, hi, name in BANDS:
        if lo <= err < hi:
            return name
    return BANDS[-1][2]


def evaluate_queue(queue, mu, kinds, *, r, scheme, sim_cfg, threads=1, diffusion_column=True):
    """Rows comparing finite approximation and fluid against simulation."""
    t0 = time.perf_counter()
    finite = finite_measures(queue, mu, kinds, r, scheme=scheme, threads=threads)
    finite_seconds = time.perf_counter() - t0
    fluid = fluid_measures(queue, mu, kinds)
    sim = simulate_measures(queue, mu, kinds, sim_cfg)
    rows = []
    for k in kinds:
        ref = sim[k.name]
        rows.append(dict(queue_id=queue.label, measure=k.name, method="simulation",
                         value=ref.value, stderr=ref.stderr, rel_error=""))
        for method, val in (("finite", finite[k.name]), ("fluid", fluid[k.name])):
            err, flagged = rel_error(val, ref.value)
            if flagged:
                log.warning("%s/%s: simulation value below %g, reporting absolute error",
                            queue.label, k.name, SIM_FLOOR)
            rows.append(dict(queue_id=queue.label, measure=k.name, method=method, value=val,
                             stderr="", rel_error=err))
        if diffusion_column:
            rows.append(dict(queue_id=queue.label, measure=k.name, method="diffusion",
                             value="", stderr="", rel_error=""))
    return rows, finite_seconds


def run_eval_error_study(spec, threads=1, queues=None):
    """Per-queue rows plus a band summary (counts per measure and method)."""
    queues = queues if queues is not None else synthetic_queues(
        spec.count, spec.seed, spec.intensity_range, spec.scv_range, spec.patience_mean_range,
        spec.ybar)
    kinds = [OfferedSojourn(), AbandonmentProb()]
    seeds = _child_seeds(spec.seed, len(queues))
    rows, timings = [], []
    for q, s in zip(queues, seeds):
        cfg = SimConfig(n=spec.sim_n, burn_in=spec.burn_in, seed=s)
        qrows, secs = evaluate_queue(q, SUPPLY_RATIO * q.intensity, kinds, r=spec.r,
                                     scheme=spec.scheme, sim_cfg=cfg, threads=threads)
        rows += qrows
        timings.append(secs)
    return rows, band_summary(rows), timings


def band_summary(rows):
    out = []
    pairs = sorted({(r["measure"], r["method"]) for r in rows
                    if r["method"] in ("finite", "fluid")})
    for measure, method in pairs:
        errs = [r["rel_error"] for r in rows if r["measure"] == measure and r["method"] == method]
        for _, _, name in BANDS:
            n = sum(band_of(e) == name for e in errs)
            out.append(dict(measure=measure, method=method, band=name, count=n,
                            share=n / len(errs) if errs else 0.0))
    return out


# ------------------------------------------------------------------ Markovian simplification


def default_patience_mix(mean=0.7, bound=25.0):
    """Two-phase truncated mixture with the requested mean (phases 1:10 apart)."""
    return truncated_mixture_with_mean((0.5, 0.5), (10.0, 1.0), bound, mean)


def run_markovian_simplification_study(p_weights, patience_mix=None, *, r=10,
                                       scheme=EVAL_SCHEME, mean_patience=0.7):
    """Compare the GI model with its exponential simplification for each weight p.

    Inter-arrivals mix Exp(10) and Exp(40) with weight p on the first; the
    simplified model keeps the intensity but uses exponential inter-arrivals
    and an exponential patience with the same mean, truncated at the bound.
    """
    patience_mix = patience_mix or default_patience_mix(mean_patience)
    bound = patience_mix.bound
    simple_pat = TruncatedMixtureExponential((1.0,), (1.0 / mean_patience,), bound)
    kinds = [OfferedWait(), WaitingAbandonment()]
    rows = []
    for p in p_weights:
        if p <= 0.0 or p >= 1.0:
            arrival = Exponential(10.0 if p >= 1.0 else 40.0)
        else:
            arrival = MixtureExponential((p, 1.0 - p), (10.0, 40.0))
        lam = arrival.intensity
        mu = SUPPLY_RATIO * lam
        gi = finite_measures(QueueSpec(arrival, patience_mix, f"gi_p{p:g}"), mu, kinds, r,
                             scheme=scheme)
        mm = finite_measures(QueueSpec(Exponential(lam), simple_pat, f"mm_p{p:g}"), mu, kinds,
                             r, scheme=scheme)
        for k in kinds:
            gap, _ = rel_error(mm[k.name], gi[k.name])
            rows.append(dict(p=p, measure=k.name, gi=gi[k.name], simplified=mm[k.name],
                             rel_gap=gap))
    return rows


# ------------------------------------------------------------------ equity frontier


def _measure(name):
    return {"offered_sojourn": OfferedSojourn(), "abandonment": AbandonmentProb()}[name]


def frontier_levels(queues, kind, spec, phi=None):
    """Increasing efficiency caps between the min-mean and the unconstrained-equity solutions."""
    lam = np.array([q.intensity for q in queues])
    base = dict(n_knots=spec.knots, r=spec.r, eps=spec.eps, scheme=spec.scheme,
                mu_total=SUPPLY_RATIO * lam.sum())
    eff = SizingProblem(list(queues), [kind], "generic", p=lam / lam.sum(), **base)
    eff_sol = run_algorithm1(eff, phi=phi)
    free = build_equity_model(queues, kind, np.inf, **base)
    free_sol = run_algorithm1(free, phi=phi)
    # caps start eps above the efficient mean so the +-eps/2 bands leave room
    lo, hi = eff_sol.objective + spec.eps, free_sol.w_bar
    if hi <= lo:
        return [hi] * spec.frontier_points
    return list(lo + np.linspace(0.1, 1.0, spec.frontier_points) * (hi - lo))


def run_equity_frontier(spec, queues=None, threads=1):
    """Frontier rows (varsigma, Z, w_bar) and per-queue allocations at each level."""
    queues = queues if queues is not None else synthetic_queues(
        spec.count, spec.seed, spec.intensity_range, spec.scv_range, spec.patience_mean_range,
        spec.ybar)
    kind = _measure(spec.measure)
    lam = np.array([q.intensity for q in queues])
    probe = build_equity_model(queues, kind, np.inf, n_knots=spec.knots, r=spec.r,
                               eps=spec.eps, scheme=spec.scheme)
    from .optimizer import pwl_tables

    phi = pwl_tables(probe, threads)
    levels = frontier_levels(queues, kind, spec, phi)
    frontier, alloc = [], []
    for lvl in levels:
        pb = build_equity_model(queues, kind, lvl, SUPPLY_RATIO * lam.sum(), n_knots=spec.knots,
                                r=spec.r, eps=spec.eps, scheme=spec.scheme)
        try:
            sol = run_algorithm1(pb, phi=phi)
        except Infeasible:
            frontier.append(dict(varsigma=lvl, Z=math.nan, w_bar=math.nan, status="infeasible"))
            continue
        frontier.append(dict(varsigma=lvl, Z=sol.objective, w_bar=sol.w_bar, status="optimal"))
        for q, mu, w in zip(queues, sol.mu, sol.w[:, 0]):
            alloc.append(dict(varsigma=lvl, queue_id=q.label, intensity=q.intensity,
                              mean_patience=q.patience.mean, mu=mu, ratio=mu / q.intensity,
                              w=w))
    return frontier, alloc


def tertile_labels(values, names):
    q1, q2 = np.quantile(values, [1 / 3, 2 / 3])
    return [names[0] if v <= q1 else names[1] if v <= q2 else names[2] for v in values]


def cluster_analysis(alloc_rows):
    """Mean allocation ratio per (intensity tertile, risk tertile) at each level.

    Risk is high when the mean patience is short.
    """
    out = []
    for lvl in sorted({r["varsigma"] for r in alloc_rows}):
        rows = [r for r in alloc_rows if r["varsigma"] == lvl]
        inten = tertile_labels([r["intensity"] for r in rows], ("small", "medium", "large"))
        risk = tertile_labels([r["mean_patience"] for r in rows], ("high", "medium", "low"))
        for a in ("small", "medium", "large"):
            for b in ("low", "medium", "high"):
                ratios = [r["ratio"] for r, x, y in zip(rows, inten, risk) if x == a and y == b]
                out.append(dict(varsigma=lvl, intensity=a, risk=b, count=len(ratios),
                                mean_ratio=float(np.mean(ratios)) if ratios else ""))
    return out


def run_study(spec, threads=1):
    """Dispatch on ``spec.study``; returns {table name: rows}."""
    if spec.study == "eval_error":
        rows, bands, timings = run_eval_error_study(spec, threads)
        return {"eval_error": rows, "eval_error_bands": bands}
    if spec.study in ("equity_frontier", "cluster_analysis"):
        frontier, alloc = run_equity_frontier(spec, threads=threads)
        out = {"frontier": frontier, "allocations": alloc}
        if spec.study == "cluster_analysis":
            out["clusters"] = cluster_analysis(alloc)
        return out
    return {"markovian": run_markovian_simplification_study(spec.p_weights, r=spec.r,
                                                            scheme=spec.scheme)}


__all__ = ["StudySpec", "synthetic_queues", "run_eval_error_study", "band_summary",
           "run_markovian_simplification_study", "run_equity_frontier", "cluster_analysis",
           "run_study", "rel_error", "band_of", "BANDS"]
