"""Synthetic point placement over a city grid.

Placement follows three stages: draw a start cell from a prior built on
point-of-interest counts, spread out with a short random walk guided by a
Gaussian kernel density estimate over the active cells' centroids, then
pick a uniform location inside the terminal cell. The walk accumulates a
reward equal to the density of the cell it steps from, so walks launched
in dense areas terminate sooner.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rrgkit.geo import CellId, GeoPoint, GridSpec, cells_of_arrays, centroids_xy, unproject_arrays
from rrgkit.rrg import SchemaError

POINTS_HEADER = ["idx", "lat", "lon", "cell_row", "cell_col"]


class EmptySubsetError(ValueError):
    """The active-cell subset is empty."""


class ZeroMassError(ValueError):
    """Every cell in the subset has a zero point-of-interest count."""


class TooFewPointsError(ValueError):
    """Kernel density estimation needs at least two sample cells."""


@dataclass
class PoiTable:
    """Point-of-interest counts aggregated per grid cell."""

    counts: dict[CellId, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, cell: CellId, count: int = 1) -> None:
        self.counts[cell] = self.counts.get(cell, 0) + count


def aggregate_pois(
    lats: np.ndarray, lons: np.ndarray, weights: np.ndarray | None, grid: GridSpec
) -> tuple[PoiTable, int]:
    """Bin raw point-of-interest coordinates into cells.

    Returns the table and the number of points dropped for falling outside
    the grid.
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    w = np.ones(lats.size, dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
    rows, cols, ok = cells_of_arrays(lats, lons, grid)
    dropped = int(w[~ok].sum())
    table = PoiTable()
    flat = rows[ok] * grid.n_cols + cols[ok]
    acc = np.zeros(grid.n_cells, dtype=np.int64)
    np.add.at(acc, flat, w[ok])
    for f in np.flatnonzero(acc):
        table.counts[grid.cell_at(int(f))] = int(acc[f])
    return table, dropped


def read_poi_csv(path: str, grid: GridSpec) -> tuple[PoiTable, int]:
    """Load a PoI CSV with header lat,lon or lat,lon,count and bin it.

    Returns the table and the dropped (out-of-grid) count.
    """
    lats: list[float] = []
    lons: list[float] = []
    weights: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("missing header", 1) from None
        if header == ["lat", "lon"]:
            has_count = False
        elif header == ["lat", "lon", "count"]:
            has_count = True
        else:
            raise SchemaError("expected header lat,lon or lat,lon,count", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != (3 if has_count else 2):
                raise SchemaError(f"expected {3 if has_count else 2} fields, got {len(row)}", row_no)
            try:
                lats.append(float(row[0]))
                lons.append(float(row[1]))
                weights.append(int(row[2]) if has_count else 1)
            except ValueError as exc:
                raise SchemaError(f"unparseable row {row!r}", row_no) from exc
            if weights[-1] < 0:
                raise SchemaError(f"negative count {weights[-1]}", row_no)
    return aggregate_pois(np.array(lats), np.array(lons), np.array(weights, dtype=np.int64), grid)


@dataclass
class PriorVector:
    """Probability mass function over an ordered cell subset."""

    cells: list[CellId]
    pr: np.ndarray

    def __post_init__(self) -> None:
        self.pr = np.asarray(self.pr, dtype=np.float64)
        if len(self.cells) != self.pr.size:
            raise ValueError("cells and pr must have equal length")
        if np.any(self.pr < 0) or abs(float(self.pr.sum()) - 1.0) > 1e-12:
            raise ValueError("pr must be non-negative and sum to 1")
        self._flat_cache: dict[int, np.ndarray] = {}

    def flat_cells(self, grid: GridSpec) -> np.ndarray:
        """Row-major cell ids aligned with pr (cached per grid shape)."""
        arr = self._flat_cache.get(grid.n_cols)
        if arr is None:
            arr = np.array([c.row * grid.n_cols + c.col for c in self.cells], dtype=np.int64)
            self._flat_cache[grid.n_cols] = arr
        return arr


def compute_prior(poi: PoiTable, subset: Sequence[CellId]) -> PriorVector:
    """Normalize the subset's PoI counts into a probability vector."""
    if not subset:
        raise EmptySubsetError("subset of cells is empty")
    counts = np.array([poi.counts.get(c, 0) for c in subset], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ZeroMassError("no points of interest in the chosen subset")
    return PriorVector(list(subset), counts / total)


def select_subset(poi: PoiTable, history_cells: Iterable[CellId] | None = None) -> list[CellId]:
    """Choose the active-cell subset.

    Historically active cells win when history is available; otherwise all
    cells with a positive PoI count. Sorted for determinism.
    """
    if history_cells is not None:
        return sorted(set(history_cells))
    return sorted(c for c, v in poi.counts.items() if v > 0)


@dataclass
class KdeModel:
    """Product Gaussian kernel density over sample points in planar meters.

    The density integrates to 1 over the plane. Cell-level lookups are
    cached: the walk only ever needs densities at cell centroids.
    """

    grid: GridSpec
    samples_xy: np.ndarray
    bandwidth: tuple[float, float]

    _cell_density: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _walk_nbr: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _walk_cum: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def density(self, x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray | float:
        """Evaluate the density at planar coordinates (vectorized)."""
        hx, hy = self.bandwidth
        xq = np.atleast_1d(np.asarray(x, dtype=np.float64))
        yq = np.atleast_1d(np.asarray(y, dtype=np.float64))
        dx = (xq[:, None] - self.samples_xy[None, :, 0]) / hx
        dy = (yq[:, None] - self.samples_xy[None, :, 1]) / hy
        norm = 1.0 / (self.samples_xy.shape[0] * 2.0 * math.pi * hx * hy)
        out = np.exp(-0.5 * (dx * dx + dy * dy)).sum(axis=1) * norm
        if np.isscalar(x) and np.isscalar(y):
            return float(out[0])
        return out

    @property
    def cell_density(self) -> np.ndarray:
        """Density at every cell centroid of the grid, row-major.

        The product kernel factorizes over the grid axes, so the full-grid
        evaluation reduces to one (rows x samples) by (samples x cols)
        matrix product.
        """
        if self._cell_density is None:
            grid = self.grid
            hx, hy = self.bandwidth
            xs = (np.arange(grid.n_cols) + 0.5) * grid.cell_size_m
            ys = (np.arange(grid.n_rows) + 0.5) * grid.cell_size_m
            gx = np.exp(-0.5 * ((xs[:, None] - self.samples_xy[None, :, 0]) / hx) ** 2)
            gy = np.exp(-0.5 * ((ys[:, None] - self.samples_xy[None, :, 1]) / hy) ** 2)
            norm = 1.0 / (self.samples_xy.shape[0] * 2.0 * math.pi * hx * hy)
            self._cell_density = (gy @ gx.T).ravel() * norm
        return self._cell_density

    def density_at(self, cell: CellId) -> float:
        return float(self.cell_density[self.grid.flat_index(cell)])

    def _tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell neighbor ids and cumulative selection probabilities.

        Rows are padded to 8 slots; padding carries cumulative probability
        1.0 so it can never be selected by a uniform draw in [0, 1).
        """
        if self._walk_nbr is None:
            grid = self.grid
            n = grid.n_cells
            flats = np.arange(n, dtype=np.int64)
            rows = flats // grid.n_cols
            cols = flats % grid.n_cols
            nbr = np.zeros((n, 8), dtype=np.int64)
            valid = np.zeros((n, 8), dtype=bool)
            from rrgkit.geo import NEIGHBOR_OFFSETS

            for j, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
                rr = rows + dr
                cc = cols + dc
                v = (rr >= 0) & (rr < grid.n_rows) & (cc >= 0) & (cc < grid.n_cols)
                valid[:, j] = v
                nbr[:, j] = np.where(v, rr * grid.n_cols + cc, 0)

            order = np.argsort(~valid, axis=1, kind="stable")
            nbr = np.take_along_axis(nbr, order, axis=1)
            valid = np.take_along_axis(valid, order, axis=1)
            k = valid.sum(axis=1)

            dens = np.where(valid, self.cell_density[nbr], 0.0)
            totals = dens.sum(axis=1)
            underflow = totals <= 0.0
            if underflow.any():
                dens[underflow] = valid[underflow].astype(np.float64)
                totals = dens.sum(axis=1)
            cum = np.cumsum(dens, axis=1) / totals[:, None]
            pad = np.arange(8)[None, :] >= (k - 1)[:, None]
            cum = np.where(pad, 1.0, cum)

            self._walk_nbr = nbr
            self._walk_cum = cum
        return self._walk_nbr, self._walk_cum


def fit_kde(subset: Sequence[CellId], grid: GridSpec) -> KdeModel:
    """Fit the Gaussian KDE over the subset's cell centroids.

    Bandwidth per axis follows Scott's rule for two dimensions,
    h = std * m^(-1/6), floored at half a cell so tiny subsets cannot
    produce degenerate spikes.
    """
    if len(subset) < 2:
        raise TooFewPointsError(f"need >= 2 cells for a density estimate, got {len(subset)}")
    xy = centroids_xy(list(subset), grid)
    m = xy.shape[0]
    floor = grid.cell_size_m / 2.0
    hx = max(float(np.std(xy[:, 0], ddof=1)) * m ** (-1.0 / 6.0), floor)
    hy = max(float(np.std(xy[:, 1], ddof=1)) * m ** (-1.0 / 6.0), floor)
    return KdeModel(grid=grid, samples_xy=xy, bandwidth=(hx, hy))


@dataclass(frozen=True)
class WalkParams:
    """Random-walk termination bounds.

    The walk runs while the accumulated reward stays at or below max_r and
    fewer than max_s steps have been taken, so max_s is the exact step
    budget and max_r = inf disables the reward bound.
    """

    max_r: float
    max_s: int

    def __post_init__(self) -> None:
        if self.max_r < 0 or math.isnan(self.max_r):
            raise ValueError(f"max_r must be >= 0, got {self.max_r}")
        if self.max_s < 0:
            raise ValueError(f"max_s must be >= 0, got {self.max_s}")


def random_step(
    curr: CellId, kde: KdeModel, rng: np.random.Generator
) -> tuple[CellId, float]:
    """One walk step: move to a neighbor, collect the current cell's reward.

    The next cell is drawn from the in-grid 8-neighborhood with probability
    proportional to the density at each candidate's centroid (uniform when
    every candidate density underflows to zero).
    """
    grid = kde.grid
    candidates = grid.neighbors(curr)
    dens = np.array([kde.density_at(c) for c in candidates])
    total = dens.sum()
    if total <= 0.0:
        dens = np.ones(len(candidates))
        total = float(len(candidates))
    cum = np.cumsum(dens) / total
    cum[-1] = 1.0
    choice = int(np.searchsorted(cum, rng.random(), side="right"))
    return candidates[choice], kde.density_at(curr)


def random_walk(
    kde: KdeModel, start: CellId, params: WalkParams, rng: np.random.Generator
) -> CellId:
    """Walk from a start cell until a termination bound trips."""
    curr = start
    tot_r = 0.0
    steps = 0
    while tot_r <= params.max_r and steps < params.max_s:
        curr, r = random_step(curr, kde, rng)
        steps += 1
        tot_r += r
    return curr


def _walk_flat(
    kde: KdeModel, start_flat: np.ndarray, params: WalkParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized walk over flat cell ids; all walkers advance in lock step.

    Draw protocol: one uniform per active walker per step, in walker order.
    """
    cells = start_flat.astype(np.int64, copy=True)
    if cells.size == 0 or params.max_s <= 0:
        return cells
    nbr, cum = kde._tables()
    rewards_all = kde.cell_density
    tot_r = np.zeros(cells.size, dtype=np.float64)
    active = tot_r <= params.max_r
    for _ in range(params.max_s):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = cells[idx]
        u = rng.random(idx.size)
        choice = (u[:, None] > cum[cur]).sum(axis=1)
        cells[idx] = nbr[cur, choice]
        tot_r[idx] += rewards_all[cur]
        active[idx] = tot_r[idx] <= params.max_r
    return cells


def generate_points(
    kde: KdeModel,
    m: int,
    prior: PriorVector,
    params: WalkParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Generate m synthetic locations; returns (lats, lons, rows, cols).

    Start cells are drawn with replacement from the prior, spread by the
    guided walk, and each final location is uniform inside its terminal
    cell. rows/cols identify the terminal cells.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    grid = kde.grid
    labels = rng.choice(prior.pr.size, size=m, replace=True, p=prior.pr)
    start = prior.flat_cells(grid)[labels]
    term = _walk_flat(kde, start, params, rng)
    uv = rng.random((m, 2))
    rows = term // grid.n_cols
    cols = term % grid.n_cols
    xs = (cols + uv[:, 0]) * grid.cell_size_m
    ys = (rows + uv[:, 1]) * grid.cell_size_m
    lats, lons = unproject_arrays(xs, ys, grid.origin)
    return lats, lons, rows, cols


def spatial_prop_gen(
    kde: KdeModel,
    m: int,
    prior: PriorVector,
    params: WalkParams,
    rng: np.random.Generator,
) -> list[GeoPoint]:
    """Generate m synthetic points as GeoPoints."""
    lats, lons, _, _ = generate_points(kde, m, prior, params, rng)
    return [GeoPoint(float(la), float(lo)) for la, lo in zip(lats, lons)]


def default_walk_params(kde: KdeModel, prior: PriorVector, max_s: int = 5) -> WalkParams:
    """Reward bound from the density scale of the active cells.

    max_r is three times the 90th percentile of the density over the
    subset's centroids, so walks from dense areas stop after a few steps
    while walks from sparse areas use the full step budget.
    """
    dens = kde.cell_density[prior.flat_cells(kde.grid)]
    return WalkParams(max_r=3.0 * float(np.percentile(dens, 90)), max_s=max_s)


@dataclass
class SpatialModel:
    """Everything needed to place points for one city."""

    grid: GridSpec
    prior: PriorVector
    kde: KdeModel
    walk: WalkParams


def build_spatial_model(
    poi: PoiTable,
    grid: GridSpec,
    subset: Sequence[CellId] | None = None,
    max_s: int = 5,
    max_r: float | None = None,
) -> SpatialModel:
    """Assemble prior, density estimate, and walk bounds for a city."""
    cells = list(subset) if subset is not None else select_subset(poi)
    prior = compute_prior(poi, cells)
    kde = fit_kde(cells, grid)
    if max_r is not None:
        walk = WalkParams(max_r=max_r, max_s=max_s)
    else:
        walk = default_walk_params(kde, prior, max_s=max_s)
    return SpatialModel(grid=grid, prior=prior, kde=kde, walk=walk)


def write_points_csv(
    path: str, lats: np.ndarray, lons: np.ndarray, rows: np.ndarray, cols: np.ndarray
) -> None:
    """Emit generated points: idx,lat,lon,cell_row,cell_col."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POINTS_HEADER)
        for i, (la, lo, r, c) in enumerate(zip(lats, lons, rows, cols)):
            writer.writerow([i, repr(float(la)), repr(float(lo)), int(r), int(c)])
