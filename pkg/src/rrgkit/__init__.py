"""Toolkit for space-time ride request graphs.

Builds directed ride request graphs from trip records on a metric grid,
fits the densification power law across interval snapshots, synthesizes
artificial demand that reproduces a target densification factor, and
measures ride poolability under space-time proximity constraints.
"""

from rrgkit.geo import CellId, GeoPoint, GridSpec, cell_of, centroid, distance_m
from rrgkit.rrg import RideRequest, Rrg, SnapshotStat, build_rrg, snapshot_series
from rrgkit.dpl import DplFit, evaluate, fit_dpl
from rrgkit.pooling import PoolingParams, greedy_pool, poolability_series

__version__ = "0.1.0"

__all__ = [
    "CellId",
    "DplFit",
    "GeoPoint",
    "GridSpec",
    "PoolingParams",
    "RideRequest",
    "Rrg",
    "SnapshotStat",
    "build_rrg",
    "cell_of",
    "centroid",
    "distance_m",
    "evaluate",
    "fit_dpl",
    "greedy_pool",
    "poolability_series",
    "snapshot_series",
]
