import json
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from udset import tubes
from udset.ambient import CantorSet, fat_cantor
from udset.geometry import points_wedge_distance
from udset.verification import (check_nesting, check_wedge_approximation, closedness_probe, component_diameters,
                                disconnectedness_probe, engine_oracle, hardwork_ball, porosity_probe,
                                raster_members, summary_csv, tube_invariants)


def test_tube_invariants_pass_on_the_build(con):
    rep = tube_invariants(con)
    assert rep.passed and rep.counts["pass"] == len(con.triples)


def test_doubled_width_is_caught(con):
    bad = tubes.loads(tubes.dumps(con))
    victim = max((t for t in bad.triples.values() if t.level == bad.K), key=lambda t: t.id)
    bad.triples[victim.id] = replace(victim, w=2 * victim.w)
    rep = tube_invariants(bad)
    assert not rep.passed
    assert [c.inputs["id"] for c in rep.cases if c.failed] == [victim.id]


def test_small_nesting_and_hardwork_runs(con):
    assert check_nesting(con, n=40, seed=2).passed
    rep = hardwork_ball(con, n=40, seed=2, n_points=4)
    assert rep.passed and rep.counts["pass"] == 40


def test_wedge_approximation_small_run_and_out_of_range(con):
    rep = check_wedge_approximation(con, trials=6, out_of_range=2, seed=3, n_points=3)
    assert rep.passed
    assert rep.counts["pass"] == 6 and rep.counts["out-of-range"] == 2


def test_wedge_approximation_refuses_equal_lambdas(con):
    with pytest.raises(ValueError):
        check_wedge_approximation(con, 0.5, 0.5)


def test_closedness_small_run(con):
    rep = closedness_probe(con, 2, 0.5, n=3, seed=1)
    assert rep.passed and rep.counts["pass"] >= 3


def _segment_set(a, b, r):
    arr = np.array([a, b, a], float)
    return lambda Y: points_wedge_distance(np.atleast_2d(Y), arr) <= r


def test_porosity_of_a_thin_wedge():
    contains = _segment_set((-1, 0), (1, 0), 1e-4)
    rep = porosity_probe(contains, [[0.0, 0.0], [0.5, 0.0]], [0.2], [0.1, 0.03, 0.01])
    assert rep.passed and rep.notes["fraction"] == 1.0


def test_ball_interior_has_no_empty_balls():
    contains = lambda Y: np.linalg.norm(np.atleast_2d(Y), axis=1) <= 1.0
    rep = porosity_probe(contains, [[0.0, 0.0]], [0.2], [0.5, 0.2])
    assert rep.notes["fraction"] == 0.0


@pytest.mark.slow
def test_tube_set_is_not_porous_near_the_root(con):
    rep = porosity_probe(engine_oracle(con, 0.5), [con.root_wedge.array[1]], [0.3], [1 / 64])
    assert rep.notes["fraction"] == 0.0


def test_cantor_slice_of_a_single_tube():
    w, h, s = 0.01, 5e-4, 8.0
    c = fat_cantor(3)
    tube = _segment_set((0.0, 0.0), (1 / s, 0.0), w)

    def contains(Y):
        Y = np.atleast_2d(Y)
        return tube(Y) & c.contains_many(s * Y[:, 0])
    G, mask = raster_members(contains, (-0.02, -0.02), (0.145, 0.02), h)
    diams = component_diameters(G, mask, h)
    assert len(diams) == 8
    assert max(diams) <= 4 * (w + h)


def test_full_ball_fails_the_shrink_probe():
    contains = lambda Y: np.linalg.norm(np.atleast_2d(Y), axis=1) <= 0.5
    rep = disconnectedness_probe(contains, (-0.6, -0.6), (0.6, 0.6), [0.04, 0.02, 0.01, 0.005])
    assert not rep.passed
    assert all(r["components"] == 1 for r in rep.notes["rows"])


def _digit_dust(Y, depth=12):
    # product of the base-3 Cantor set with digits {1, 2}; raster centres (i + 1/2) 3^-k land on it exactly
    Y = np.atleast_2d(Y)
    n = np.floor(Y * 3.0 ** depth).astype(np.int64)
    ok = np.all((Y >= 0) & (Y < 1), axis=1)
    for _ in range(depth):
        ok &= np.all(n % 3 != 0, axis=1)
        n //= 3
    return ok


def test_dust_passes_the_shrink_probe():
    rep = disconnectedness_probe(_digit_dust, (0, 0), (1, 1), [3.0 ** -k for k in range(3, 7)])
    assert rep.passed
    comps = [r["components"] for r in rep.notes["rows"]]
    assert comps == sorted(comps) and comps[0] > 1


def test_reports_serialise(con):
    rep = tube_invariants(con)
    json.loads(rep.to_json())
    rows = summary_csv([rep]).splitlines()
    assert rows[0].startswith("suite,") and rows[1].startswith("tube_invariants,True")
