import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udset.analysis import (CORPUS, InvalidInput, LipschitzFunction, LipschitzViolation, NormState, add_linear,
                            corpus_function, dir_derivative, distance_to_segments, frechet_modulus, gap_slope, in_G,
                            increment_gap, l1_norm, linear_function, norm_gradient, omega_envelope, p_norm,
                            t_grid, theta_default, wedge_growth_search)

unit_angle = st.floats(0, 2 * math.pi)


def _unit(a):
    return np.array([math.cos(a), math.sin(a)])


@pytest.fixture(scope="module")
def omega():
    return omega_envelope()


# -- directional derivatives

def test_linear_derivative_is_exact_at_every_scale():
    a = np.array([0.6, -0.8])
    f = LipschitzFunction(lambda y: np.asarray(y) @ a, 1.0)
    dd = dir_derivative(f, [0.3, 0.2], [1.0, 0.0])
    assert dd.exists
    assert dd.value == pytest.approx(0.6, abs=1e-9)
    assert dd.spread < 1e-8


def test_l1_corner_is_flagged():
    f = LipschitzFunction(lambda y: np.abs(np.asarray(y)).sum(-1), math.sqrt(2))
    dd = dir_derivative(f, [0.0, 0.0], [1.0, 0.0])
    assert not dd.exists
    assert dd.spread == pytest.approx(2.0)
    assert math.isnan(l1_norm().dir(np.zeros(2), np.array([1.0, 0.0])))


def test_distance_to_circle_derivative():
    f = LipschitzFunction(lambda y: np.abs(np.linalg.norm(np.asarray(y), axis=-1) - 1), 1.0)
    assert dir_derivative(f, [2.0, 0.0], [1.0, 0.0]).value == pytest.approx(1.0, abs=1e-6)


def test_derivative_rejects_zero_direction():
    with pytest.raises(InvalidInput):
        dir_derivative(l1_norm(), [1.0, 1.0], [0.0, 0.0])


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_is_lipschitz_and_oracles_match_differences(name):
    f = corpus_function(name)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.6, 0.6, size=(400, 2))
    f.check_lipschitz(pts, rng)
    fd = LipschitzFunction(f.evaluator, f.L)
    for y in pts[:40]:
        e = _unit(rng.uniform(0, 2 * math.pi))
        exact = f.dir(y, e)
        approx = dir_derivative(fd, y, e)
        if not math.isnan(exact) and approx.exists:
            assert exact == pytest.approx(approx.value, abs=1e-5)


def test_check_lipschitz_catches_a_false_constant():
    f = LipschitzFunction(lambda y: 3 * np.asarray(y)[..., 0], 1.0)
    with pytest.raises(LipschitzViolation):
        f.check_lipschitz(np.random.default_rng(0).normal(size=(50, 2)))


# -- Omega

def test_omega_spot_value_and_breakpoints(omega):
    assert omega(1.0) == pytest.approx(6.0, abs=1e-12)
    for n in (-20, -10, -3, 0):
        assert omega.beta(2.0 ** n) == pytest.approx(float(theta_default(2.0 ** (n + 1))), rel=1e-12)


@settings(max_examples=300)
@given(st.floats(-30, 6))
def test_omega_dominates_twice_theta(omega, lt):
    t = 2.0 ** lt
    assert omega(t) >= 2 * float(theta_default(t)) - 1e-12


@settings(max_examples=300)
@given(st.floats(-30, 5), st.floats(-30, 5))
def test_omega_superadditive_step(omega, la, lb):
    A, B = 2.0 ** la, 2.0 ** lb
    assert omega(A) + 2 * B <= omega(A + B) + 1e-12


def test_omega_is_increasing(omega):
    t = np.logspace(-15, 2, 2000)
    assert np.all(np.diff(omega(t)) > 0)


def test_omega_rejects_large_theta():
    with pytest.raises(InvalidInput):
        omega_envelope(lambda s: 3 + 0 * np.asarray(s))


# -- norms

def test_norm_examples():
    assert p_norm(NormState(), [3.0, 4.0]) == 5.0
    st1 = NormState((0.25,), ((1.0, 0.0),))
    assert p_norm(st1, [1.0, 0.0]) == 1.0
    assert p_norm(st1, [0.0, 1.0]) == pytest.approx(math.sqrt(17) / 4)


def test_norm_state_validation():
    with pytest.raises(InvalidInput):
        NormState((0.25, 0.2), ((1.0, 0.0), (0.0, 1.0)))
    with pytest.raises(InvalidInput):
        NormState((0.6,), ((1.0, 0.0),))


@st.composite
def norm_states(draw):
    n = draw(st.integers(0, 6))
    ts, es, t = [], [], 0.49
    for _ in range(n):
        t = t * draw(st.floats(0.05, 0.49))
        ts.append(t)
        es.append(tuple(_unit(draw(unit_angle))))
    return NormState(tuple(ts), tuple(es))


@settings(max_examples=200)
@given(norm_states(), st.floats(-5, 5), st.floats(-5, 5))
def test_norm_sandwich(state, a, b):
    y = np.array([a, b])
    n = np.linalg.norm(y)
    p = p_norm(state, y)
    assert n * (1 - 1e-12) <= p <= 2 * n * (1 + 1e-12)


@settings(max_examples=100)
@given(norm_states(), unit_angle)
def test_gradient_norms_its_direction(state, a):
    e = _unit(a)
    g = norm_gradient(state, e)
    assert g @ e == pytest.approx(p_norm(state, e), rel=1e-12)


# -- the G sets

def test_in_G_identical_pair_always_admitted(omega):
    f = l1_norm()
    ts = t_grid(2.0)
    base = (np.array([0.3, 0.2]), np.array([1.0, 0.0]))
    for sigma in (0.0, 0.5, 4.0):
        assert in_G(f, NormState(), base, base, sigma, omega, ts).ok


def test_in_G_linear_equal_weights(omega):
    f = linear_function([0.6, 0.8])
    ts = t_grid(2.0)
    e = np.array([0.6, 0.8])
    r = in_G(f, NormState(), (np.array([0.0, 0.0]), e), (np.array([0.4, -0.3]), e), 0.0, omega, ts)
    assert r.ok


def test_kink_gap_matches_dense_scan():
    f = l1_norm()
    yb, yc, e = np.array([0.05, 0.3]), np.array([-0.05, 0.3]), np.array([1.0, 0.0])
    coarse = gap_slope(f, yb, e, yc, t_grid(2.0, 1e-6, 64))
    dense_t = np.concatenate([-np.linspace(1e-6, 2, 400_001)[::-1], np.linspace(1e-6, 2, 400_001)])
    dense = float(np.max(increment_gap(f, yb, e, yc, dense_t) / np.abs(dense_t)))
    assert coarse > 0
    assert coarse == pytest.approx(dense, rel=0.05)


# -- growth search

def test_growth_reports_failed_precondition_when_already_maximal():
    f = l1_norm()
    y, e = np.array([1.0, 0.1]), np.array([1.0, 0.0])
    r = wedge_growth_search(f, y, e, 0.01, 0.01, 0.0, 0.001 * e, 0.01 * e, 0.01 * e, 0.001 * e)
    assert r.status == "precondition-violation"
    assert "large_increment" in r.failed_preconditions


def test_growth_search_finds_the_kink():
    def der(y, e):
        y2, e2 = np.asarray(y)[..., 1], np.asarray(e)[..., 1]
        return np.where(y2 == 0, np.where(e2 == 0, 0.0, np.nan), np.sign(y2) * e2)

    f = LipschitzFunction(lambda y: np.abs(np.asarray(y)[..., 1]), 1.0, der)
    y, e, eps, s = np.zeros(2), np.array([1.0, 0.0]), 5e-6, 1.0
    lam = np.array([0.0, 1.5e-3 * s])
    r = wedge_growth_search(f, y, e, eps, s, 0.0, lam, s * e, s * e, lam)
    assert r.status == "found"
    assert f.dir(np.asarray(r.point), np.asarray(r.direction)) >= eps


# -- modulus

def test_modulus_of_linear_function_is_zero():
    a = np.array([0.6, 0.8])
    f = linear_function(a)
    m = frechet_modulus(f, [0.1, 0.1], a, a, [0.1, 0.01, 0.001])
    assert max(m.values) < 1e-12


def test_modulus_of_l1_smooth_point_and_kink():
    f = l1_norm()
    m = frechet_modulus(f, [1.0, 1.0], np.array([1.0, 0.0]), np.array([1.0, 1.0]), [0.5, 0.1, 0.01])
    assert m.values[-1] < 1e-12
    k = frechet_modulus(f, [1.0, 0.0], np.array([1.0, 0.0]), np.array([1.0, 0.0]), [0.1, 0.01, 0.001])
    assert min(k.values) > 0.5


def test_modulus_argument_checks():
    f = l1_norm()
    with pytest.raises(InvalidInput):
        frechet_modulus(f, [1.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.1, 0.2])
    with pytest.raises(InvalidInput):
        frechet_modulus(f, [1.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.1], n_dirs=4)


def test_add_linear_extends_the_oracle():
    g = distance_to_segments([[[0.0, 0.0], [1.0, 0.0]]])
    f = add_linear(g, 2.0, [1.0, 0.0])
    y, e = np.array([0.5, 0.5]), np.array([0.0, 1.0])
    assert f.dir(y, e) == pytest.approx(1.0)
    assert f.L == pytest.approx(g.L + 2.0)
