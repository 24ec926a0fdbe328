"""Segmentation of the timestep grid into m consistency segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError
from .solver import OdeDirection

# Published segment edges for T_max = 1000, keyed by (m, tau).
PUBLISHED_EDGES: dict[tuple[int, float], tuple[int, ...]] = {
    (4, 0.8): (19, 259, 519, 779, 999),
    (4, 0.7): (19, 259, 519, 699, 999),
    (3, 0.7): (19, 339, 699, 999),
}


class GridError(IndexError):
    pass


@dataclass(frozen=True)
class BoundaryPlan:
    """m contiguous segments of ``grid``, delimited by ``edges`` (m + 1 grid points).

    A reverse jump from t lands on the lower edge of the segment (lo, hi]
    holding t; a forward jump lands on the upper edge of [lo, hi). The two
    terminal grid points map to themselves.
    """

    grid: tuple[int, ...]
    edges: tuple[int, ...]

    def __post_init__(self):
        if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ContractError(f"segment edges must be strictly increasing: {self.edges}")
        if self.edges[0] != self.grid[0] or self.edges[-1] != self.grid[-1]:
            raise ContractError("outer edges must be the grid endpoints")
        missing = set(self.edges) - set(self.grid)
        if missing:
            raise ContractError(f"edges {sorted(missing)} are not grid timesteps")

    @property
    def m(self) -> int:
        return len(self.edges) - 1

    @property
    def reverse_timesteps(self) -> list[int]:
        """Starting timesteps of the m reverse (decoding) jumps, ascending."""
        return list(self.edges[1:])

    @property
    def forward_timesteps(self) -> list[int]:
        """Starting timesteps of the m forward (encoding) jumps, ascending."""
        return list(self.edges[:-1])

    def boundary_for(self, t, direction: OdeDirection):
        """Target boundary s for timestep(s) ``t``; vectorised over arrays."""
        arr = np.asarray(t)
        grid = np.asarray(self.grid)
        if not np.all(np.isin(arr, grid)):
            raise GridError(f"timestep(s) not on the grid: {np.setdiff1d(arr, grid)}")
        edges = np.asarray(self.edges)
        if direction is OdeDirection.REVERSE:
            idx = np.searchsorted(edges, arr, side="left") - 1
            out = edges[np.maximum(idx, 0)]
        else:
            idx = np.searchsorted(edges, arr, side="right")
            out = edges[np.minimum(idx, len(edges) - 1)]
        return int(out) if out.ndim == 0 else out

    def segment_of(self, t, direction: OdeDirection) -> tuple[int, int]:
        s = self.boundary_for(t, direction)
        return (s, int(t)) if direction is OdeDirection.REVERSE else (int(t), s)


def _nearest(grid: np.ndarray, value: float) -> int:
    return int(grid[np.argmin(np.abs(grid - value))])


def make_plan(grid, m: int, tau: float | None = None, T_max: int = 1000) -> BoundaryPlan:
    """Split ``grid`` into ``m`` segments.

    The three published (m, tau) configurations at T_max = 1000 are looked up
    (snapped to the nearest grid points). Otherwise, with ``tau`` the topmost
    inner edge sits at the grid point nearest tau * T_max and the rest are
    spread evenly by grid index below it; without ``tau`` all edges are even.
    """
    grid = np.asarray(grid, dtype=np.int64)
    n_int = len(grid) - 1
    if not 1 <= m <= n_int:
        raise ContractError(f"m={m} needs 1 <= m <= {n_int} grid intervals")
    key = (m, round(float(tau), 6)) if tau is not None else None
    if T_max == 1000 and key in PUBLISHED_EDGES:
        edges = [_nearest(grid, e) for e in PUBLISHED_EDGES[key]]
    elif m == 1:
        edges = [int(grid[0]), int(grid[-1])]
    elif tau is not None:
        top = int(np.argmin(np.abs(grid - tau * T_max)))
        top = min(max(top, m - 1), n_int - 1)
        lower = np.round(np.linspace(0, top, m)).astype(int)
        edges = [int(grid[i]) for i in lower] + [int(grid[-1])]
    else:
        idx = np.round(np.linspace(0, n_int, m + 1)).astype(int)
        edges = [int(grid[i]) for i in idx]
    return BoundaryPlan(tuple(int(g) for g in grid), tuple(edges))
