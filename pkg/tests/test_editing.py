import numpy as np
import pytest

from icd.editing import EditRequest, edit, edit_eval, frontier_csv, svg_overlay
from icd.inversion import decode, encode
from icd.rng import stream
from icd.solver import GuidanceSchedule

from oracles import oracle_pair

PAIRS = [(k, (k + 1) % 8) for k in range(8)]


@pytest.fixture(scope="module")
def pair(mix, sched):
    return oracle_pair(mix, sched)


@pytest.fixture(scope="module")
def points(mix):
    return mix.sample(1024, stream(0, "edit"))[0]


def test_identity_edit_is_roundtrip(pair, points):
    fcd, cd = pair
    g = GuidanceSchedule.step(8.0, 0.7)
    req = EditRequest(points[:32], 3, 3, g)
    assert req.identity
    z, _ = encode(fcd, points[:32], 3)
    np.testing.assert_array_equal(edit(fcd, cd, req), decode(cd, z, 3, g))


def test_identity_report_uses_tolerance(pair, mix, points):
    fcd, cd = pair
    rep = edit_eval(fcd, cd, mix, points, [(2, 2)], GuidanceSchedule.unguided(), stream(0, "b"), tol=10.0)
    assert rep.identity and rep.edit_success == 1.0
    rep = edit_eval(fcd, cd, mix, points, [(2, 2)], GuidanceSchedule.unguided(), stream(0, "b"), tol=0.0)
    assert rep.edit_success == 0.0


def test_adjacent_swap_lands_on_target(pair, mix, points):
    fcd, cd = pair
    rep = edit_eval(fcd, cd, mix, points, PAIRS, GuidanceSchedule.step(8.0, 0.7), stream(0, "b"))
    assert rep.edit_success >= 0.9
    assert rep.n == len(points)


def test_constant_guidance_preserves_less(pair, mix, points):
    fcd, cd = pair
    step = edit_eval(fcd, cd, mix, points, PAIRS, GuidanceSchedule.step(8.0, 0.7), stream(0, "b"))
    const = edit_eval(fcd, cd, mix, points, PAIRS, GuidanceSchedule.constant(8.0), stream(0, "b"))
    assert const.edit_success >= step.edit_success - 1e-12
    assert const.preservation > step.preservation


def test_empty_pairs_rejected(pair, mix, points):
    fcd, cd = pair
    with pytest.raises(ValueError):
        edit_eval(fcd, cd, mix, points, [], GuidanceSchedule.unguided(), stream(0, "b"))


def test_frontier_csv_and_overlay(pair, mix, points):
    fcd, cd = pair
    rows = []
    for tau in (0.5, 0.6, 0.7, 0.8):
        rep = edit_eval(fcd, cd, mix, points[:256], PAIRS, GuidanceSchedule.step(8.0, tau), stream(0, "f"))
        rows.append({"tau": tau, "w_max": 8.0, **rep.row()})
    lines = frontier_csv(rows).splitlines()
    assert lines[0] == "tau,w_max,edit_success,preservation,baseline,n" and len(lines) == 5
    svg = svg_overlay(mix, points[:16], points[:16] + 0.1)
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert svg == svg_overlay(mix, points[:16], points[:16] + 0.1)
