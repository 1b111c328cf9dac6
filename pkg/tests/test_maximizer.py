import math
from fractions import Fraction

import numpy as np
import pytest

from udset.ambient import fat_cantor
from udset.analysis import WeightedPair, add_linear, corpus_function, l1_norm, linear_function, scaled
from udset.maximizer import (Bundle, EmptyBundle, Schedule, almost_maximality_check, disconnected_set, iterate,
                             make_bundle, rescan_pools, start_pair, trace_violations, uds_pipeline)


@pytest.fixture(scope="module")
def bundle(con):
    return make_bundle(con, 0.5)


@pytest.fixture(scope="module")
def l1_report(con):
    return uds_pipeline(l1_norm(), con, 0.25, 0.5, N=12, pool_size=12, seed=0)


@pytest.fixture(scope="module")
def linear_trace(con, bundle):
    # gradient along the start direction, so e0 is already maximal
    g = linear_function([math.sqrt(0.5), math.sqrt(0.5)])
    x0, e0 = start_pair(g, con, 0.5)
    assert np.allclose(e0, g.dir(np.zeros(2), np.eye(2)))
    f = scaled(add_linear(g, 2.0, e0), 1 / 3)
    return f, iterate(f, bundle, x0, e0, N=5, pool_size=8, seed=1, n_directions=180)


def test_standard_schedule_is_feasible_and_exact():
    s = Schedule.standard(12)
    assert s.violations() == []
    assert s.sigma[0] == 16 and s.delta0 == 1
    assert all(isinstance(v, Fraction) for v in s.eps)
    assert s.t[1] == Fraction(1, 12)


def test_bundle_membership(bundle, con):
    y = tuple(con.root_wedge.array[1])
    for tau in (0.01, 0.25, 0.49):
        assert bundle.contains((tau,) + y)
    assert not bundle.contains((0.5,) + y)
    assert not bundle.contains((0.7,) + y)


def test_bundle_projection_lands_in_T(bundle, con):
    from udset.tubes import MembershipEngine
    eng = MembershipEngine(con, 0.5)
    rng = np.random.default_rng(5)
    arr = con.root_wedge.array
    for _ in range(30):
        x = (rng.uniform(0.01, 0.49),) + tuple(arr[1] + rng.normal(scale=0.05, size=2))
        if bundle.contains(x):
            assert eng.in_T(bundle.project(x))


def test_bundle_metric_and_perturb(bundle):
    a = (0.25, 0.0, 0.0)
    b = bundle.perturb(a, 0.3, [0.0, 0.4])
    assert bundle.distance(a, b) == pytest.approx(0.7)
    assert bundle.distance(a, a) == 0.0


def test_empty_bundle_rejected(con):
    with pytest.raises(ValueError):
        make_bundle(con, 0.0)


def test_linear_trace_invariants(linear_trace, bundle):
    f, tr = linear_trace
    assert trace_violations(tr, bundle) == []
    ws = [r.weight for r in tr.records]
    assert max(ws) - min(ws) < 1e-9
    assert max(np.linalg.norm(np.subtract(r.e, tr.records[0].e)) for r in tr.records) < 1e-6
    assert tr.min_e0_star >= 0.5 - 1e-9


def test_pool_keeps_previous_pair_and_selection_is_eps_optimal(linear_trace):
    _, tr = linear_trace
    for rec, excess in zip(tr.records[1:], rescan_pools(tr)):
        assert excess <= rec.eps + 1e-12
    for rec in tr.records[1:]:
        assert rec.pool_size >= 1


def test_fault_injection_fails_maximality(linear_trace, bundle):
    f, tr = linear_trace
    last = tr.records[-1]
    eps = 2 * (last.eps + 2 * last.t ** 2)
    ok = almost_maximality_check(f, bundle, tr, eps, probes=8)
    assert ok.passed
    fake = WeightedPair(tr.x_limit, tr.e_limit, last.weight + 1.0)
    bad = almost_maximality_check(f, bundle, tr, eps, probes=8, extra_pairs=[fake])
    assert not bad.passed
    assert bad.worst[0] == pytest.approx(tuple(tr.x_limit))


def test_maximality_eps_guard(linear_trace, bundle):
    f, tr = linear_trace
    with pytest.raises(ValueError):
        almost_maximality_check(f, bundle, tr, 0.0)


def test_empty_probe_set_passes_vacuously(linear_trace, bundle):
    f, tr = linear_trace
    last = tr.records[-1]
    rep = almost_maximality_check(f, bundle, tr, 2 * (last.eps + 2 * last.t ** 2), probes=0, include_tail=False)
    assert rep.passed and rep.vacuous


def test_l1_pipeline_weight_does_not_drop(l1_report):
    assert l1_report.derivative >= l1_report.initial_derivative - 1e-9
    ws = [r.weight for r in l1_report.trace.records]
    assert ws[-1] >= ws[0] - 1e-9


def test_l1_pipeline_avoids_kinks_and_hits_a_one_sided_maximum(l1_report):
    y, e = np.asarray(l1_report.point), np.asarray(l1_report.direction)
    assert np.all(np.abs(y) > 1e-9)
    g_slope = float(np.sign(y) @ e)
    e0 = np.asarray(l1_report.trace.records[0].e)
    assert l1_report.derivative == pytest.approx(g_slope + 2 * math.sqrt(2) * float(e0 @ e), abs=1e-6)


def test_l1_pipeline_modulus_decays(l1_report):
    assert l1_report.modulus.values[-1] <= l1_report.modulus.values[0] / 4
    assert l1_report.maximality.passed


def test_disconnected_set_membership(con):
    c = fat_cantor(4)
    S = disconnected_set(con, 0.5, [0.0, 0.0], 0.1, c, [1.0, 0.0])
    assert S.contains([0.0, 0.0])
    gap = float(c.intervals[0][1] + c.intervals[1][0]) / 2
    assert not S.contains([gap + S.shift, 0.0])
    with pytest.raises(ValueError):
        disconnected_set(con, 0.5, [0.9, 0.9], 0.1, c, [1.0, 0.0])
