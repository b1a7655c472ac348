"""Densification power law fit: e = C * n^alpha across snapshots.

The fit is ordinary least squares on (ln n, ln e), which matches the
straight line such data traces on log-log axes and needs no iteration.
Snapshots with zero nodes or zero edges are excluded (their logs are
undefined); the exclusion count is reported on the fit.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from rrgkit.rrg import SnapshotStat

logger = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    """Fewer than two usable snapshots after filtering."""


class DegenerateXError(ValueError):
    """All usable snapshots share one node count; the slope is undefined."""


@dataclass(frozen=True)
class DplFit:
    """Power-law parameters and goodness of fit.

    alpha is the densification factor: 1.0 means edges grow linearly with
    nodes, 2.0 is the fully connected limit. r_squared is computed in log
    space.
    """

    alpha: float
    c: float
    r_squared: float
    points_used: int
    excluded: int = 0


def fit_dpl(stats: Sequence[SnapshotStat]) -> DplFit:
    """Least-squares fit of e = C * n^alpha over a snapshot series."""
    n = np.array([s.n for s in stats], dtype=np.float64)
    e = np.array([s.e for s in stats], dtype=np.float64)
    usable = (n >= 1) & (e >= 1)
    excluded = int(len(stats) - usable.sum())
    n, e = n[usable], e[usable]
    if n.size < 2:
        raise InsufficientDataError(f"need >= 2 usable snapshots, got {n.size}")
    x = np.log(n)
    y = np.log(e)
    if np.all(x == x[0]):
        raise DegenerateXError("all snapshots have the same node count")

    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        # flat y: the horizontal line either fits exactly or explains nothing
        r2 = 1.0 if ss_res < 1e-12 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    r2 = min(1.0, max(0.0, r2))

    alpha = float(slope)
    if not 1.0 <= alpha <= 2.0:
        logger.warning("densification factor %.4f outside the typical [1.0, 2.0] range", alpha)
    return DplFit(alpha=alpha, c=float(np.exp(intercept)), r_squared=r2,
                  points_used=int(n.size), excluded=excluded)


def evaluate(fit: DplFit, n: float) -> float:
    """Predicted edge count for a node count under the fitted law."""
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    return fit.c * n ** fit.alpha


def write_fit_json(path: str, fit: DplFit) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_csv(path: str, stats: Sequence[SnapshotStat], fit: DplFit) -> None:
    """Emit n,e,e_fit rows for the usable snapshots, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "e", "e_fit"])
        for s in stats:
            if s.n >= 1 and s.e >= 1:
                writer.writerow([s.n, s.e, repr(evaluate(fit, s.n))])
