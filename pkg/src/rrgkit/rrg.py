"""Ride request graphs: one directed weighted graph per time interval.

A ride request graph has a node for every grid cell that contains at least
one ride source or destination in the interval, and a directed edge from
source cell to destination cell of every ride; the edge weight counts the
rides sharing that ordered cell pair. A snapshot series slices a dataset
into consecutive half-open intervals and builds one graph per interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from rrgkit.geo import CellId, GeoPoint, GridSpec, cells_of_arrays

RIDES_HEADER = ["id", "t", "src_lat", "src_lon", "dst_lat", "dst_lon"]
SNAPSHOT_HEADER = ["interval_index", "start_epoch", "n", "e", "rides", "dropped"]


class EmptyRangeError(ValueError):
    """Requested time range is empty (t1 <= t0)."""


class SchemaError(ValueError):
    """A CSV row violates the rides schema."""

    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class RideRequest:
    """One trip demand: source, destination, and request time (epoch seconds)."""

    id: str
    t: int
    src: GeoPoint
    dst: GeoPoint


@dataclass
class Rrg:
    """Directed weighted graph of the rides in one interval."""

    interval_index: int
    nodes: set[CellId] = field(default_factory=set)
    edges: dict[tuple[CellId, CellId], int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def e(self) -> int:
        return len(self.edges)

    @property
    def ride_count(self) -> int:
        return sum(self.edges.values())

    def stat(self, dropped: int = 0) -> "SnapshotStat":
        return SnapshotStat(self.interval_index, self.n, self.e, self.ride_count, dropped)


@dataclass(frozen=True)
class SnapshotStat:
    """Node/edge/ride counts of one interval's graph."""

    interval_index: int
    n: int
    e: int
    rides: int
    dropped: int = 0


def build_rrg(
    rides: Sequence[RideRequest], grid: GridSpec, interval_index: int = 0
) -> tuple[Rrg, int]:
    """Build the graph for one interval's rides.

    Rides whose source or destination falls outside the grid are dropped.
    Returns the graph and the dropped-ride count. Output is independent of
    the input ordering.
    """
    graph = Rrg(interval_index)
    if not rides:
        return graph, 0
    s_lat = np.array([r.src.lat for r in rides])
    s_lon = np.array([r.src.lon for r in rides])
    d_lat = np.array([r.dst.lat for r in rides])
    d_lon = np.array([r.dst.lon for r in rides])
    sr, sc, s_ok = cells_of_arrays(s_lat, s_lon, grid)
    dr, dc, d_ok = cells_of_arrays(d_lat, d_lon, grid)
    ok = s_ok & d_ok
    dropped = int(len(rides) - ok.sum())
    for i in np.flatnonzero(ok):
        a = CellId(int(sr[i]), int(sc[i]))
        b = CellId(int(dr[i]), int(dc[i]))
        graph.nodes.add(a)
        graph.nodes.add(b)
        graph.edges[(a, b)] = graph.edges.get((a, b), 0) + 1
    return graph, dropped


def interval_count(t0: int, t1: int, interval_len: int) -> int:
    """Number of half-open intervals covering [t0, t1)."""
    if t1 <= t0:
        raise EmptyRangeError(f"empty time range [{t0}, {t1})")
    if interval_len <= 0:
        raise ValueError(f"interval_len must be positive, got {interval_len}")
    return -(-(t1 - t0) // interval_len)


def snapshot_series(
    rides: Sequence[RideRequest],
    grid: GridSpec,
    interval_len: int = 300,
    t0: int | None = None,
    t1: int | None = None,
) -> list[tuple[Rrg, SnapshotStat]]:
    """Build one graph per interval of [t0, t1) split into half-open slots.

    A ride at exactly an interval boundary belongs to the later interval.
    Rides outside [t0, t1) are ignored; in-range rides with an endpoint
    outside the grid count into the interval's dropped column. When t0/t1
    are omitted they default to the data extent.
    """
    ts = np.array([r.t for r in rides], dtype=np.int64)
    if t0 is None:
        if ts.size == 0:
            raise EmptyRangeError("cannot infer time range from an empty dataset")
        t0 = int(ts.min())
    if t1 is None:
        if ts.size == 0:
            raise EmptyRangeError("cannot infer time range from an empty dataset")
        t1 = int(ts.max()) + 1
    n_intervals = interval_count(t0, t1, interval_len)

    graphs = [Rrg(k) for k in range(n_intervals)]
    dropped = np.zeros(n_intervals, dtype=np.int64)
    if ts.size:
        in_range = (ts >= t0) & (ts < t1)
        s_lat = np.array([r.src.lat for r in rides])
        s_lon = np.array([r.src.lon for r in rides])
        d_lat = np.array([r.dst.lat for r in rides])
        d_lon = np.array([r.dst.lon for r in rides])
        sr, sc, s_ok = cells_of_arrays(s_lat, s_lon, grid)
        dr, dc, d_ok = cells_of_arrays(d_lat, d_lon, grid)
        ok = s_ok & d_ok
        slot = (ts - t0) // interval_len

        bad = in_range & ~ok
        if bad.any():
            np.add.at(dropped, slot[bad], 1)

        use = in_range & ok
        if use.any():
            key = np.stack([slot[use], sr[use], sc[use], dr[use], dc[use]])
            uniq, counts = np.unique(key, axis=1, return_counts=True)
            for (k, a_r, a_c, b_r, b_c), w in zip(uniq.T, counts):
                g = graphs[int(k)]
                a = CellId(int(a_r), int(a_c))
                b = CellId(int(b_r), int(b_c))
                g.nodes.add(a)
                g.nodes.add(b)
                g.edges[(a, b)] = int(w)

    return [(g, g.stat(dropped=int(dropped[k]))) for k, g in enumerate(graphs)]


# -- rides CSV (ingestion and emission) --


def _parse_timestamp(text: str, row: int) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SchemaError(f"unparseable timestamp {text!r}", row) from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_coord(text: str, kind: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise SchemaError(f"unparseable {kind} {text!r}", row) from exc
    limit = 90.0 if kind.endswith("lat") else 180.0
    if not -limit <= value <= limit:
        raise SchemaError(f"{kind} {value} out of range", row)
    return value


def read_rides_csv(path: str) -> list[RideRequest]:
    """Load rides from CSV with header id,t,src_lat,src_lon,dst_lat,dst_lon.

    Timestamps are Unix epoch seconds or RFC 3339. Raises SchemaError (with
    the offending 1-based row number) on any malformed row, missing header,
    or duplicate ride id.
    """
    rides: list[RideRequest] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("missing header", 1) from None
        if [h.strip() for h in header] != RIDES_HEADER:
            raise SchemaError(f"expected header {','.join(RIDES_HEADER)}", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise SchemaError(f"expected 6 fields, got {len(row)}", row_no)
            rid = row[0].strip()
            if not rid:
                raise SchemaError("empty ride id", row_no)
            if rid in seen:
                raise SchemaError(f"duplicate ride id {rid!r}", row_no)
            seen.add(rid)
            t = _parse_timestamp(row[1], row_no)
            src = GeoPoint(
                _parse_coord(row[2], "src_lat", row_no),
                _parse_coord(row[3], "src_lon", row_no),
            )
            dst = GeoPoint(
                _parse_coord(row[4], "dst_lat", row_no),
                _parse_coord(row[5], "dst_lon", row_no),
            )
            rides.append(RideRequest(rid, t, src, dst))
    return rides


def write_rides_csv(path: str, rides: Iterable[RideRequest]) -> None:
    """Emit rides in the ingestion schema (timestamps as epoch seconds)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RIDES_HEADER)
        for r in rides:
            writer.writerow([r.id, r.t, repr(r.src.lat), repr(r.src.lon), repr(r.dst.lat), repr(r.dst.lon)])


def write_snapshot_csv(
    path: str, stats: Sequence[SnapshotStat], t0: int, interval_len: int
) -> None:
    """Emit per-interval stats: interval_index,start_epoch,n,e,rides,dropped."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_HEADER)
        for s in stats:
            writer.writerow(
                [s.interval_index, t0 + s.interval_index * interval_len, s.n, s.e, s.rides, s.dropped]
            )


def read_snapshot_csv(path: str) -> list[SnapshotStat]:
    """Load per-interval stats written by :func:`write_snapshot_csv`."""
    stats: list[SnapshotStat] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("missing header", 1) from None
        if [h.strip() for h in header] != SNAPSHOT_HEADER:
            raise SchemaError(f"expected header {','.join(SNAPSHOT_HEADER)}", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise SchemaError(f"expected 6 fields, got {len(row)}", row_no)
            try:
                k, _, n, e, rides, dropped = (int(v) for v in row)
            except ValueError as exc:
                raise SchemaError("non-integer field", row_no) from exc
            stats.append(SnapshotStat(k, n, e, rides, dropped))
    return stats
