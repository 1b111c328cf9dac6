from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udset import tubes
from udset.geometry import Wedge, points_wedge_distance
from udset.tubes import (MembershipEngine, OutOfRange, RklSchedule, approximating_tube, delta1_from_widths,
                         membership_J, membership_T)


def test_schedule_first_entries_and_bounds():
    s = RklSchedule(Fraction(1, 4))
    assert s(1, 0) == Fraction(1, 80)
    assert s.violations(8) == []
    for k in range(2, 8):
        assert s(k + 1, k) <= Fraction(1, k)


def test_stored_triples_satisfy_every_bound(con):
    assert con.sweep() == {}


def test_alpha_is_schedule_times_parent_width(con):
    for t in con.triples.values():
        if t.parent is not None:
            par = con.triples[t.parent]
            assert Fraction(t.alpha) == Fraction(float(con.schedule(t.level, par.level) * Fraction(par.w)))


def test_self_child_keeps_the_wedge(con):
    root = con.root
    child = con.store_child(root, 1, root.wedge.array)
    assert child.r == root.r
    assert child.alpha == float(con.schedule(1, 0) * Fraction(root.w))


@pytest.mark.parametrize("lam", [0.0, 0.25, 0.5, 1.0])
def test_root_wedge_points_are_members_at_every_level(con, lam):
    eng = MembershipEngine(con, lam)
    for y in ([-0.25, 0.0], [0.0, 0.0], [0.125, 0.125], [-0.1, 0.0]):
        for k in range(1, con.K + 1):
            assert eng.witness_M(y, k) is not None
        assert eng.in_T(y)


def test_far_points_are_not_members(con):
    eng = MembershipEngine(con, 1.0)
    arr = con.root_wedge.array
    for y in ([0.9, -0.9], [-0.9, 0.8], [0.0, -0.8]):
        assert points_wedge_distance(np.array([y]), arr)[0] > 3 * con.tubes.alpha0
        assert not eng.in_T(y)


def test_lambda_zero_requires_exact_incidence(con):
    eng = MembershipEngine(con, 0.0)
    assert eng.in_T([0.0, 0.0])
    assert not eng.in_T([0.1, 0.1 + 1e-7 * np.pi])


def test_j_range_index_arithmetic(con):
    assert list(MembershipEngine(con, 1.0).j_range(2)) == [2, 3, 4]
    assert list(MembershipEngine(con, 0.0).j_range(3)) == [3]


def test_witness_ids_match_stored_triples(con):
    eng = MembershipEngine(con, 0.5)
    wit = eng.witness_M([0.05, 0.03], con.K)
    assert wit is not None
    stored = con.store_steps(wit.steps)
    assert [t.id for t in stored] == [i for _, i in wit.chain]
    assert stored[-1].w == wit.w


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.35, 0.35), st.floats(-0.1, 0.35))
def test_J_is_nested_in_lambda(con, x, y):
    if membership_J([x, y], 2, 0.25, con):
        assert membership_J([x, y], 2, 0.5, con)


def test_fast_and_naive_engines_agree(con_k2):
    rng = np.random.default_rng(3)
    fast, naive = MembershipEngine(con_k2, 0.5), MembershipEngine(con_k2, 0.5, naive=True)
    arr = con_k2.root_wedge.array
    for _ in range(25):
        y = arr[rng.integers(3)] + rng.normal(scale=0.08, size=2)
        for k in (1, 2):
            assert fast.in_M(y, k) == naive.in_M(y, k)


def test_round_trip_is_byte_identical(con_k2, tmp_path):
    raw = tubes.dumps(con_k2)
    back = tubes.loads(raw)
    assert tubes.dumps(back) == raw
    p = tubes.save(con_k2, tmp_path / "c.uds")
    assert tubes.load(p).level_counts() == con_k2.level_counts()


def test_truncated_file_is_rejected(con_k2):
    raw = tubes.dumps(con_k2)
    for cut in (3, 40, len(raw) - 1):
        with pytest.raises(tubes.CorruptFile):
            tubes.loads(raw[:cut])


def test_loaded_construction_answers_identically(con, tmp_path):
    back = tubes.load(tubes.save(con, tmp_path / "c.uds"))
    rng = np.random.default_rng(7)
    pts = con.root_wedge.array[rng.integers(3, size=100)] + rng.normal(scale=0.06, size=(100, 2))
    a, b = MembershipEngine(con, 0.25), MembershipEngine(back, 0.25)
    assert [a.in_T(y) for y in pts] == [b.in_T(y) for y in pts]


def test_approximating_tube_on_the_root(con):
    y = np.array([0.0, 0.0])
    wit = MembershipEngine(con, 0.25).witnesses_T(y)
    d1 = delta1_from_widths([w.w for w in wit], 0.25, 0.9, con.rho)
    rng = np.random.default_rng(0)
    for _ in range(3):
        delta = d1 / 2
        u = rng.normal(size=(3, 2))
        s = Wedge.from_array(y + delta * rng.random((3, 1)) * u / np.linalg.norm(u, axis=1, keepdims=True))
        cert = approximating_tube(y, delta, s, 0.25, 0.5, con, witnesses=wit)
        assert cert.distance < 0.9 * delta
        assert con.triple_violations(cert.triple) == []


def test_approximating_tube_preconditions(con):
    y = np.array([0.0, 0.0])
    s = Wedge((0, 0), (1e-9, 0), (0, 1e-9))
    with pytest.raises(OutOfRange):
        approximating_tube(y, 1.0, s, 0.25, 0.5, con)
    with pytest.raises(ValueError):
        approximating_tube(y, 1e-6, s, 0.5, 0.5, con)


def test_membership_T_convenience(con):
    assert membership_T([0.0, 0.0], 0.5, con)
    with pytest.raises(ValueError):
        membership_J([0.0, 0.0], con.K + 1, 0.5, con)
