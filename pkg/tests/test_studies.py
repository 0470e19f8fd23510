import math

import numpy as np
import pytest

from abandonq.distributions import Exponential, MixtureExponential
from abandonq.errors import SchemaError
from abandonq.measures import OfferedWait, WaitingAbandonment, finite_measures
from abandonq.model import QueueSpec
from abandonq.studies import (StudySpec, band_of, band_summary, cluster_analysis,
                              default_patience_mix, rel_error, run_equity_frontier,
                              run_eval_error_study, run_markovian_simplification_study,
                              synthetic_queues, tertile_labels, truncated_mixture_with_mean)


def _small(**kw):
    base = dict(count=2, r=6, sim_n=20_000, burn_in=1000, seed=5)
    base.update(kw)
    return StudySpec(**base)


def test_bands_and_relative_error():
    assert [band_of(e) for e in (0.0, 0.009, 0.01, 0.07, 0.2, 0.25, 3.0)] == \
        ["<1%", "<1%", "1-5%", "5-10%", "10-25%", ">25%", ">25%"]
    assert rel_error(1.1, 1.0) == (pytest.approx(0.1), False)
    assert rel_error(0.5, 0.0) == (0.5, True)


def test_generator_ranges_and_determinism():
    qs = synthetic_queues(30, seed=4)
    again = synthetic_queues(30, seed=4)
    assert qs == again
    for q in qs:
        assert 5.0 <= q.intensity <= 50.0
        assert q.patience.bound == 25.0
        assert q.patience.mean == pytest.approx(q.meta["mean_patience"], rel=1e-10)
        assert 0.4 <= q.meta["mean_patience"] <= 1.2
        w, r = np.asarray(q.arrival.weights), np.asarray(q.arrival.rates)
        m1 = np.sum(w / r)
        scv = np.sum(2 * w / r**2) / m1**2 - 1
        assert scv == pytest.approx(q.meta["scv"], rel=1e-9)
        assert 1.2 <= scv <= 3.0


def test_truncated_mean_solver():
    g = truncated_mixture_with_mean((0.2, 0.8), (1.0, 5.0), 3.0, 0.9)
    assert g.mean == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(ValueError):
        truncated_mixture_with_mean((1.0,), (1.0,), 3.0, 3.5)


def test_empty_study():
    rows, bands, timings = run_eval_error_study(_small(count=0))
    assert rows == [] and timings == [] and bands == []


def test_eval_study_rows_and_determinism():
    spec = _small()
    rows, bands, timings = run_eval_error_study(spec)
    assert rows == run_eval_error_study(spec)[0]
    methods = {(r["queue_id"], r["measure"], r["method"]) for r in rows}
    assert len(methods) == 2 * 2 * 4
    assert {r["method"] for r in rows} == {"simulation", "finite", "fluid", "diffusion"}
    assert len(timings) == 2
    shares = [b["share"] for b in bands if b["method"] == "finite" and
              b["measure"] == "abandonment"]
    assert sum(shares) == pytest.approx(1.0)
    assert band_summary(rows) == bands


def test_markovian_study_properties():
    rows = run_markovian_simplification_study((0.1, 0.5, 0.9), r=7)
    assert len(rows) == 6
    for p in (0.1, 0.5, 0.9):
        gaps = [r["rel_gap"] for r in rows if r["p"] == p]
        assert max(gaps) > 0
    assert rows == run_markovian_simplification_study((0.1, 0.5, 0.9), r=7)
    assert default_patience_mix().mean == pytest.approx(0.7, abs=1e-12)


def test_markovian_degenerate_weight_uses_one_arrival():
    rows = run_markovian_simplification_study((1.0,), r=6)
    kinds = [OfferedWait(), WaitingAbandonment()]
    mix = default_patience_mix()
    ref = finite_measures(QueueSpec(Exponential(10.0), mix), 0.879 * 10.0, kinds, 6)
    for r in rows:
        assert r["gi"] == pytest.approx(ref[r["measure"]], abs=1e-14)


def test_mixture_arrival_intensity():
    a = MixtureExponential((0.3, 0.7), (10.0, 40.0))
    assert a.intensity == pytest.approx(1 / (0.3 / 10 + 0.7 / 40))


def test_frontier_identical_queues_share_ratio():
    q = synthetic_queues(1, seed=2)[0]
    qs = [QueueSpec(q.arrival, q.patience, f"c{i}") for i in range(3)]
    spec = StudySpec(study="equity_frontier", r=6, knots=5, frontier_points=2)
    frontier, alloc = run_equity_frontier(spec, qs)
    for row in frontier:
        assert row["Z"] == pytest.approx(0.0, abs=1e-8)
    for lvl in {a["varsigma"] for a in alloc}:
        ratios = [a["ratio"] for a in alloc if a["varsigma"] == lvl]
        assert np.ptp(ratios) <= 1e-9


def test_frontier_monotone_on_small_instance():
    spec = StudySpec(study="equity_frontier", count=5, r=6, knots=5, seed=3,
                     measure="abandonment")
    frontier, alloc = run_equity_frontier(spec)
    zs = [row["Z"] for row in frontier if row["status"] == "optimal"]
    assert len(zs) == 4
    assert all(b <= a + 1e-8 for a, b in zip(zs, zs[1:]))
    levels = [row["varsigma"] for row in frontier]
    assert levels == sorted(levels)
    table = cluster_analysis(alloc)
    assert len(table) == 4 * 9
    assert sum(row["count"] for row in table) == len(alloc)


def test_tertiles_cut_at_thirds():
    vals = list(range(1, 10))
    labels = tertile_labels(vals, ("a", "b", "c"))
    assert labels == ["a"] * 3 + ["b"] * 3 + ["c"] * 3


def test_spec_roundtrip_and_validation():
    spec = _small(study="markovian")
    assert StudySpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(SchemaError):
        StudySpec.from_dict({"study": "nonsense"})
    with pytest.raises(SchemaError):
        StudySpec.from_dict({"bogus": 1})
    assert math.isclose(StudySpec().ybar, 25.0)
