import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icd.autodiff import ContractError
from icd.boundaries import BoundaryPlan, GridError, make_plan
from icd.diffusion import make_schedule
from icd.solver import OdeDirection

R, F = OdeDirection.REVERSE, OdeDirection.FORWARD


@pytest.mark.parametrize("m,tau,rev,fwd", [
    (4, 0.8, [259, 519, 779, 999], [19, 259, 519, 779]),
    (4, 0.7, [259, 519, 699, 999], [19, 259, 519, 699]),
    (3, 0.7, [339, 699, 999], [19, 339, 699]),
])
def test_published_tables(sched, m, tau, rev, fwd):
    plan = make_plan(sched.grid, m, tau)
    assert plan.reverse_timesteps == rev
    assert plan.forward_timesteps == fwd


def test_single_segment(sched):
    plan = make_plan(sched.grid, 1)
    assert plan.reverse_timesteps == [999] and plan.forward_timesteps == [19]
    for t in sched.grid:
        assert plan.boundary_for(t, R) == 19
        assert plan.boundary_for(t, F) == 999


def test_two_segments(sched):
    plan = make_plan(sched.grid, 2)
    tk = plan.edges[1]
    upper = [t for t in sched.grid if t > tk]
    assert all(plan.boundary_for(t, R) == tk for t in upper)
    assert plan.boundary_for(tk, R) == 19
    assert plan.boundary_for(tk, F) == 999


def test_edges_map_to_themselves(sched):
    plan = make_plan(sched.grid, 4, 0.7)
    assert plan.boundary_for(19, R) == 19
    assert plan.boundary_for(999, F) == 999
    for e in plan.edges[1:-1]:
        lo, hi = plan.edges[plan.edges.index(e) - 1], plan.edges[plan.edges.index(e) + 1]
        assert plan.boundary_for(e, R) == lo
        assert plan.boundary_for(e, F) == hi


def test_vectorised_boundaries(sched):
    plan = make_plan(sched.grid, 4, 0.7)
    out = plan.boundary_for(np.asarray(sched.grid), R)
    assert out.shape == (50,)
    assert [plan.boundary_for(int(t), R) for t in sched.grid] == out.tolist()


def test_errors(sched):
    with pytest.raises(ContractError):
        make_plan(sched.grid, 50)
    with pytest.raises(ContractError):
        make_plan(sched.grid, 0)
    plan = make_plan(sched.grid, 4, 0.7)
    with pytest.raises(GridError):
        plan.boundary_for(20, R)
    with pytest.raises(ContractError):
        BoundaryPlan(tuple(sched.grid), (19, 519, 259, 999))
    with pytest.raises(ContractError):
        BoundaryPlan(tuple(sched.grid), (19, 520, 999))


def test_tau_places_top_edge(sched):
    plan = make_plan(sched.grid, 5, 0.6)
    assert plan.edges[-2] == 599
    assert plan.m == 5


@given(st.integers(1, 49), st.one_of(st.none(), st.floats(0.05, 0.95)), st.integers(0, 49))
@settings(max_examples=200, deadline=None)
def test_boundaries_bracket_t(m, tau, i):
    grid = make_schedule().grid
    plan = make_plan(grid, m, tau)
    assert plan.m == m
    t = int(grid[i])
    assert plan.boundary_for(t, R) <= t <= plan.boundary_for(t, F)
    assert plan.boundary_for(t, R) in plan.edges and plan.boundary_for(t, F) in plan.edges
