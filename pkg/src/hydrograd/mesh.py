"""Gridded mesh topology: D8 flow directions, drainage accumulation, gauges.

Flow direction codes (active cells):

    8 1 2
    7 . 3      0 = explicit outlet
    6 5 4

i.e. 1=N, 2=NE, 3=E, 4=SE, 5=S, 6=SW, 7=W, 8=NW with row 0 at the north
edge.  A cell whose code points off the grid or onto an inactive cell is
treated as an outlet as well.

Active cells are numbered 0..n-1 in row-major scan order.  All per-cell
arrays in this package ("compact" arrays) are indexed by that id.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousOutletError,
    CycleError,
    GaugeOffGridError,
    InvalidCodeError,
    ShapeMismatchError,
)

# code -> (drow, dcol)
D8_OFFSETS = {
    1: (-1, 0),
    2: (-1, 1),
    3: (0, 1),
    4: (1, 1),
    5: (1, 0),
    6: (1, -1),
    7: (0, -1),
    8: (-1, -1),
}


@dataclass
class Mesh:
    """Static topology of the simulation domain.

    Attributes
    ----------
    flowdir : (nrows, ncols) int array of D8 codes.
    active : (nrows, ncols) bool array, True on simulated cells.
    dx : cell size in meters (square cells).
    active_id : grid of compact ids, -1 outside the active mask.
    rows, cols : grid coordinates of each active cell.
    down : downstream active id per cell, -1 at outlets.
    order : active ids sorted topologically, upstream before downstream.
    levels : list of id arrays; level 0 has no upstream neighbors and
        every cell appears after all of its upstream cells.
    drainage : number of active cells draining through each cell,
        itself included.
    outlets : active ids with no downstream cell.
    """

    flowdir: np.ndarray
    active: np.ndarray
    dx: float
    active_id: np.ndarray = field(init=False)
    rows: np.ndarray = field(init=False)
    cols: np.ndarray = field(init=False)
    down: np.ndarray = field(init=False)
    order: np.ndarray = field(init=False)
    levels: list = field(init=False)
    drainage: np.ndarray = field(init=False)
    outlets: np.ndarray = field(init=False)

    def __post_init__(self):
        fd = np.asarray(self.flowdir)
        act = np.asarray(self.active, dtype=bool)
        if fd.shape != act.shape or fd.ndim != 2:
            raise ShapeMismatchError(
                f"flow direction {fd.shape} vs active mask {act.shape}"
            )
        if self.dx <= 0:
            raise ShapeMismatchError(f"cell size must be positive, got {self.dx}")
        self.flowdir = fd
        self.active = act

        bad = act & ((fd < 0) | (fd > 8))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise InvalidCodeError(
                f"flow direction code {fd[r, c]} at ({r}, {c}) not in 0..8"
            )

        nr, nc = fd.shape
        self.active_id = np.full((nr, nc), -1, dtype=np.int64)
        rr, cc = np.nonzero(act)
        n = rr.size
        self.active_id[rr, cc] = np.arange(n, dtype=np.int64)
        self.rows = rr.astype(np.int64)
        self.cols = cc.astype(np.int64)

        down = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            code = fd[rr[i], cc[i]]
            if code == 0:
                continue
            dr, dc = D8_OFFSETS[code]
            r2, c2 = rr[i] + dr, cc[i] + dc
            if 0 <= r2 < nr and 0 <= c2 < nc and act[r2, c2]:
                down[i] = self.active_id[r2, c2]
        self.down = down

        # Kahn topological sort; FIFO over ids keeps the order deterministic
        # and non-decreasing in level.
        indeg = np.zeros(n, dtype=np.int64)
        np.add.at(indeg, down[down >= 0], 1)
        queue = deque(np.nonzero(indeg == 0)[0].tolist())
        order = np.empty(n, dtype=np.int64)
        level = np.zeros(n, dtype=np.int64)
        pos = 0
        while queue:
            i = queue.popleft()
            order[pos] = i
            pos += 1
            d = down[i]
            if d >= 0:
                if level[i] + 1 > level[d]:
                    level[d] = level[i] + 1
                indeg[d] -= 1
                if indeg[d] == 0:
                    queue.append(d)
        if pos != n:
            raise CycleError(
                f"flow directions contain a cycle; {n - pos} cells unreachable"
            )
        self.order = order
        nlev = int(level.max()) + 1 if n else 0
        by_level = [[] for _ in range(nlev)]
        for i in order:
            by_level[level[i]].append(i)
        self.levels = [np.asarray(ids, dtype=np.int64) for ids in by_level]

        drain = np.ones(n, dtype=np.int64)
        for i in order:
            if down[i] >= 0:
                drain[down[i]] += drain[i]
        self.drainage = drain
        self.outlets = np.nonzero(down == -1)[0].astype(np.int64)

        if n:
            top = np.nonzero(drain == drain.max())[0]
            if top.size > 1:
                cells = [(int(rr[i]), int(cc[i])) for i in top]
                raise AmbiguousOutletError(
                    f"maximum drainage area {int(drain.max())} shared by cells {cells}"
                )

    @property
    def n(self) -> int:
        return self.rows.size

    @property
    def shape(self):
        return self.flowdir.shape

    @property
    def cell_area(self) -> float:
        """Cell area in square meters."""
        return self.dx * self.dx

    def to_grid(self, values, fill=np.nan):
        """Expand a compact per-cell array onto the full grid."""
        values = np.asarray(values)
        if values.shape[-1] != self.n:
            raise ShapeMismatchError(
                f"compact array of length {values.shape[-1]}, mesh has {self.n} cells"
            )
        grid = np.full(values.shape[:-1] + self.shape, fill, dtype=values.dtype
                       if np.issubdtype(values.dtype, np.floating) else np.float64)
        grid[..., self.rows, self.cols] = values
        return grid

    def from_grid(self, grid):
        """Extract active-cell values from a full grid into a compact array."""
        grid = np.asarray(grid)
        if grid.shape[-2:] != self.shape:
            raise ShapeMismatchError(
                f"grid shape {grid.shape[-2:]} does not match mesh {self.shape}"
            )
        return np.ascontiguousarray(grid[..., self.rows, self.cols], dtype=np.float64)

    def cell_at(self, row: int, col: int) -> int:
        """Compact id of the active cell at grid coordinates."""
        nr, nc = self.shape
        if not (0 <= row < nr and 0 <= col < nc) or not self.active[row, col]:
            raise GaugeOffGridError(f"cell ({row}, {col}) is not an active cell")
        return int(self.active_id[row, col])

    def upstream_mask(self, cell: int) -> np.ndarray:
        """Boolean compact mask of cells draining through `cell` (inclusive)."""
        if not 0 <= cell < self.n:
            raise ShapeMismatchError(f"cell id {cell} out of range 0..{self.n - 1}")
        reach = np.zeros(self.n, dtype=bool)
        reach[cell] = True
        for i in self.order[::-1]:
            d = self.down[i]
            if d >= 0 and reach[d]:
                reach[i] = True
        reach[cell] = True
        return reach

    @property
    def drainage_grid(self) -> np.ndarray:
        return self.to_grid(self.drainage.astype(np.float64), fill=np.nan)


def build_mesh(flowdir, dx: float, active=None) -> Mesh:
    """Construct a Mesh from a D8 code grid.

    active defaults to every cell; pass a boolean mask to restrict the
    domain.  Codes on inactive cells are ignored.
    """
    flowdir = np.asarray(flowdir, dtype=np.int64)
    if active is None:
        active = np.ones(flowdir.shape, dtype=bool)
    return Mesh(flowdir=flowdir, active=active, dx=float(dx))


def delineate(mesh: Mesh, gauge_cells) -> list:
    """Upstream catchment mask per gauge cell (compact boolean arrays).

    Accepts compact ids or (row, col) pairs.
    """
    masks = []
    for c in gauge_cells:
        if np.ndim(c) == 1 and len(c) == 2:
            c = mesh.cell_at(int(c[0]), int(c[1]))
        c = int(c)
        if not 0 <= c < mesh.n:
            raise GaugeOffGridError(f"gauge cell id {c} outside the mesh")
        masks.append(mesh.upstream_mask(c))
    return masks


@dataclass
class GaugeSet:
    """Observation points on the mesh with calibration/validation roles.

    roles hold "cal" or "val" per gauge; weights apply to the calibration
    cost and default to uniform over the calibration gauges.
    """

    names: list
    cells: np.ndarray
    roles: list
    weights: np.ndarray = None
    mesh: Mesh = None

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if len(self.names) != self.cells.size or len(self.roles) != self.cells.size:
            raise ShapeMismatchError("gauge names/cells/roles lengths differ")
        if len(set(self.names)) != len(self.names):
            raise ShapeMismatchError("duplicate gauge names")
        for role in self.roles:
            if role not in ("cal", "val"):
                raise ShapeMismatchError(f"gauge role {role!r} not 'cal' or 'val'")
        if self.mesh is not None:
            for name, cell in zip(self.names, self.cells):
                if not 0 <= cell < self.mesh.n:
                    raise GaugeOffGridError(
                        f"gauge {name!r} references cell id {cell} outside the mesh"
                    )
        ncal = sum(1 for role in self.roles if role == "cal")
        if self.weights is None:
            w = np.zeros(self.cells.size)
            if ncal:
                w[[i for i, role in enumerate(self.roles) if role == "cal"]] = 1.0 / ncal
            self.weights = w
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.size != self.cells.size:
                raise ShapeMismatchError("gauge weights length differs from gauges")
            if (self.weights < 0).any():
                raise ShapeMismatchError("gauge weights must be non-negative")

    @property
    def n_gauges(self) -> int:
        return self.cells.size

    def subset(self, role: str):
        """Indices of gauges with the given role."""
        return [i for i, r in enumerate(self.roles) if r == role]

    def catchment_masks(self):
        """Compact upstream mask per gauge (inclusive of the gauge cell)."""
        if self.mesh is None:
            raise ShapeMismatchError("GaugeSet has no mesh attached")
        return [self.mesh.upstream_mask(int(c)) for c in self.cells]

    def combined_mask(self) -> np.ndarray:
        """Union of all gauge catchments; gradient support lives inside it."""
        masks = self.catchment_masks()
        out = np.zeros(self.mesh.n, dtype=bool)
        for m in masks:
            out |= m
        return out
