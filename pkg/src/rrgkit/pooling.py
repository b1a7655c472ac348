"""Ride poolability under time, source-radius, and destination-radius limits.

The grouping is greedy: the earliest remaining ride becomes the master,
every remaining ride within all three proximity limits joins its group,
the whole group leaves the pool, and the process repeats. Rides left in
groups of one are not poolable. Poolability is the percentage of rides in
groups of two or more.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rrgkit.geo import distance_m, distance_m_arrays
from rrgkit.rrg import EmptyRangeError, RideRequest, interval_count

POOLABILITY_HEADER = ["interval_index", "start_epoch", "total", "pooled", "pct"]


@dataclass(frozen=True)
class PoolingParams:
    """Proximity limits: request gap (s), source radius (m), destination radius (m)."""

    dt_s: float = 300.0
    ds_m: float = 100.0
    dd_m: float = 1000.0

    def __post_init__(self) -> None:
        if self.dt_s <= 0 or self.ds_m <= 0 or self.dd_m <= 0:
            raise ValueError(f"pooling limits must be positive, got {self}")


@dataclass
class PoolGroup:
    """One pooled set of rides; the master is the earliest member."""

    master: str
    members: list[str]


@dataclass
class PoolabilityResult:
    """Grouping outcome for one batch of rides."""

    total: int
    pooled: int
    groups: list[PoolGroup] = field(default_factory=list)
    singletons: list[str] = field(default_factory=list)

    @property
    def poolability_pct(self) -> float:
        return 100.0 * self.pooled / self.total if self.total else 0.0


def is_poolable_pair(master: RideRequest, other: RideRequest, params: PoolingParams) -> bool:
    """Check the three proximity constraints; all boundaries are inclusive."""
    if other.t < master.t:
        raise ValueError("master must not be later than the other ride")
    return (
        other.t - master.t <= params.dt_s
        and distance_m(master.src, other.src) <= params.ds_m
        and distance_m(master.dst, other.dst) <= params.dd_m
    )


def greedy_pool(rides: Sequence[RideRequest], params: PoolingParams) -> PoolabilityResult:
    """Partition rides into master-anchored groups and singletons.

    Rides are processed in request-time order (ties broken by ride id), so
    the outcome is deterministic for any input ordering.
    """
    n = len(rides)
    result = PoolabilityResult(total=n, pooled=0)
    if n == 0:
        return result

    order = sorted(range(n), key=lambda i: (rides[i].t, rides[i].id))
    ts = np.array([rides[i].t for i in order], dtype=np.float64)
    s_lat = np.array([rides[i].src.lat for i in order])
    s_lon = np.array([rides[i].src.lon for i in order])
    d_lat = np.array([rides[i].dst.lat for i in order])
    d_lon = np.array([rides[i].dst.lon for i in order])
    ids = [rides[i].id for i in order]

    alive = np.ones(n, dtype=bool)
    for i in range(n):
        if not alive[i]:
            continue
        alive[i] = False
        # time-sorted, so candidates live in a contiguous slice after i
        hi = int(np.searchsorted(ts, ts[i] + params.dt_s, side="right"))
        cand = np.flatnonzero(alive[i + 1 : hi]) + i + 1
        if cand.size:
            ok = distance_m_arrays(s_lat[i], s_lon[i], s_lat[cand], s_lon[cand]) <= params.ds_m
            if ok.any():
                sub = cand[ok]
                ok2 = distance_m_arrays(d_lat[i], d_lon[i], d_lat[sub], d_lon[sub]) <= params.dd_m
                matched = sub[ok2]
            else:
                matched = cand[:0]
        else:
            matched = cand
        if matched.size:
            members = [ids[i]] + [ids[j] for j in matched]
            alive[matched] = False
            result.groups.append(PoolGroup(master=ids[i], members=members))
            result.pooled += len(members)
        else:
            result.singletons.append(ids[i])
    return result


@dataclass(frozen=True)
class IntervalPoolability:
    """Poolability of one interval's rides."""

    interval_index: int
    start_epoch: int
    total: int
    pooled: int
    pct: float


def poolability_series(
    rides: Sequence[RideRequest],
    params: PoolingParams,
    interval_len: int = 300,
    t0: int | None = None,
    t1: int | None = None,
    collect_groups: bool = False,
) -> tuple[list[IntervalPoolability], list[PoolGroup]]:
    """Greedy pooling applied independently inside each interval.

    Rides never pool across an interval boundary. Returns one row per
    interval (0/0 intervals report 0%) and, when requested, all groups.
    """
    if t0 is None or t1 is None:
        if not rides:
            raise EmptyRangeError("cannot infer time range from an empty dataset")
        ts = [r.t for r in rides]
        t0 = min(ts) if t0 is None else t0
        t1 = max(ts) + 1 if t1 is None else t1
    n_intervals = interval_count(t0, t1, interval_len)

    buckets: list[list[RideRequest]] = [[] for _ in range(n_intervals)]
    for r in rides:
        if t0 <= r.t < t1:
            buckets[(r.t - t0) // interval_len].append(r)

    rows: list[IntervalPoolability] = []
    groups: list[PoolGroup] = []
    for k in range(n_intervals):
        res = greedy_pool(buckets[k], params)
        rows.append(
            IntervalPoolability(k, t0 + k * interval_len, res.total, res.pooled, res.poolability_pct)
        )
        if collect_groups:
            groups.extend(res.groups)
    return rows, groups


def pool_fit_slope(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line through (total, pooled) scatter; returns slope, intercept."""
    if len(pairs) < 2:
        raise ValueError(f"need >= 2 pairs, got {len(pairs)}")
    x = np.array([p[0] for p in pairs], dtype=np.float64)
    y = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.all(x == x[0]):
        from rrgkit.dpl import DegenerateXError

        raise DegenerateXError("all totals are equal; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def series_rmse(
    a: Sequence[IntervalPoolability], b: Sequence[IntervalPoolability]
) -> dict[str, float]:
    """Root-mean-square and extreme absolute differences of two pct series."""
    if len(a) != len(b):
        raise ValueError(f"series lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty series")
    diff = np.array([x.pct for x in a]) - np.array([y.pct for y in b])
    return {
        "rmse": float(math.sqrt(float(np.mean(diff * diff)))),
        "abs_delta_min": float(np.min(np.abs(diff))),
        "abs_delta_max": float(np.max(np.abs(diff))),
    }


def summarize(rows: Sequence[IntervalPoolability]) -> dict[str, float]:
    """Mean/min/max interval poolability plus overall counts."""
    pcts = [r.pct for r in rows]
    total = sum(r.total for r in rows)
    pooled = sum(r.pooled for r in rows)
    return {
        "intervals": len(rows),
        "mean_pct": float(np.mean(pcts)) if pcts else 0.0,
        "min_pct": float(np.min(pcts)) if pcts else 0.0,
        "max_pct": float(np.max(pcts)) if pcts else 0.0,
        "total_rides": total,
        "pooled_rides": pooled,
        "overall_pct": 100.0 * pooled / total if total else 0.0,
    }


def write_poolability_csv(path: str, rows: Sequence[IntervalPoolability]) -> None:
    """Emit interval_index,start_epoch,total,pooled,pct rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POOLABILITY_HEADER)
        for r in rows:
            writer.writerow([r.interval_index, r.start_epoch, r.total, r.pooled, repr(r.pct)])


def read_poolability_csv(path: str) -> list[IntervalPoolability]:
    """Load rows written by :func:`write_poolability_csv`."""
    from rrgkit.rrg import SchemaError

    rows: list[IntervalPoolability] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("missing header", 1) from None
        if [h.strip() for h in header] != POOLABILITY_HEADER:
            raise SchemaError(f"expected header {','.join(POOLABILITY_HEADER)}", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"expected 5 fields, got {len(row)}", row_no)
            try:
                rows.append(
                    IntervalPoolability(int(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4]))
                )
            except ValueError as exc:
                raise SchemaError("malformed row", row_no) from exc
    return rows


def write_groups_json(path: str, groups: Sequence[PoolGroup]) -> None:
    with open(path, "w") as fh:
        json.dump(
            [{"master": g.master, "members": g.members} for g in groups],
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def write_summary_json(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
