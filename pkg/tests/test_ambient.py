import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udset.ambient import (GScaffold, OutOfDomain, cantor_limit_length, cantor_retained_length, enumerate_family,
                           fat_cantor, g_contains_tube, local_member_count, net_index, net_pitch_exponent,
                           passes_filter)
from udset.geometry import Wedge, wedge_distance


def test_j1_family_members_use_half_grid_and_pass_filter():
    fam = enumerate_family(((0, 0), (1, 1)), 1)
    for _, w in fam.members():
        a = w.array
        assert set(a.ravel()) <= {0.0, 0.5, 1.0}
        assert a[0, 0] != a[1, 0] and a[1, 0] != a[2, 0]


def test_j1_family_count_matches_brute_force():
    fam = enumerate_family(((0, 0), (1, 1)), 1)
    grid = [(x, y) for x in (0, 0.5, 1) for y in (0, 0.5, 1)]
    brute = sum(1 for a, b, c in itertools.product(grid, repeat=3) if a[0] != b[0] and b[0] != c[0])
    assert fam.count() == brute == sum(1 for _ in fam.members())


def test_family_index_round_trip():
    fam = enumerate_family(((0, 0), (1, 1)), 1)
    for i, w in fam.members():
        assert fam.index_of(w) == i
        assert fam.wedge(i) == w


@settings(max_examples=100)
@given(st.lists(st.floats(0.05, 0.95), min_size=6, max_size=6))
def test_net_index_within_rounding_bound(c):
    s = Wedge(c[0:2], c[2:4], c[4:6])
    j = 4
    eps = 3 * 2.0 ** -j * math.sqrt(2)
    hit = net_index(s, eps, ((0, 0), (1, 1)))
    assert hit.distance < eps
    assert passes_filter(hit.wedge.array, np.array([1.0, 0.0]))


def test_net_index_random_trials_at_eps_01():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        s = Wedge.from_array(rng.uniform(-0.9, 0.9, size=(3, 2)))
        assert net_index(s, 0.1, ((-1, -1), (1, 1))).distance < 0.1


def test_member_is_its_own_net_point():
    s = Wedge((0, 0), (0.5, 0.5), (1, 0))
    hit = net_index(s, 0.3, ((0, 0), (1, 1)))
    assert hit.distance == 0.0 and hit.wedge == s


def test_net_index_rejects_bad_eps():
    s = Wedge((0, 0), (0.5, 0.5), (1, 0))
    with pytest.raises(OutOfDomain):
        net_index(s, 0.6, ((0, 0), (1, 1)))


def test_local_finiteness_constant_in_plane():
    worst = 0
    for eps in (0.1, 0.03, 0.011):
        for shift in np.linspace(0, 1, 5):
            w = Wedge((shift * eps, 0), (0.3 + shift * eps, 0.2), (0.6, 0.1 * shift))
            worst = max(worst, local_member_count(w, eps))
    assert worst <= 81


def test_pitch_exponent_is_minimal():
    for eps in (0.3, 0.1, 0.01, 1e-5):
        j = net_pitch_exponent(eps, 2)
        c = math.sqrt(1.25)
        assert c * 2.0 ** -j < eps <= c * 2.0 ** -(j - 1)


def test_g_contains_tube_examples():
    sc = GScaffold((1.0, 0.0))
    w = np.array([[0, 0], [0.25, 0.125], [0.5, 0]])
    eta = float(sc.eta(w, 2))
    assert g_contains_tube(sc, w, eta / 2, 2)
    assert not g_contains_tube(sc, w, 2 * eta, 2)
    for k in range(2, 6):
        v = float(sc.eta(w, k))
        assert all(g_contains_tube(sc, w, v, m) for m in range(1, k + 1))


def test_cantor_lengths_exact():
    assert cantor_retained_length(1) == Fraction(3, 4)
    assert cantor_limit_length() == Fraction(1, 2)
    for m in range(1, 10):
        c = fat_cantor(m)
        assert c.length == cantor_retained_length(m)
        floor = cantor_retained_length(m) / 2 ** m
        assert all(b - a >= floor > 0 for a, b in c.intervals)
    assert cantor_retained_length(40) - Fraction(1, 2) < Fraction(1, 2 ** 40)


@given(st.floats(0, 1))
def test_cantor_vectorised_membership_agrees(x):
    c = fat_cantor(5)
    assert c.contains(x) == bool(c.contains_many(np.array([x]))[0])


def test_cantor_gap_is_excluded():
    c = fat_cantor(3)
    assert not c.contains(0.5)
    assert c.contains(0.0) and c.contains(1.0)
