"""Command-line entry point: rrg {build-rrg, fit-dpl, synth, poolability}.

Commands compose through files only and are pure functions of their inputs,
flags, and seed: re-running a command reproduces its artifacts byte for
byte. Set RRG_LOG=DEBUG|INFO|WARNING to control verbosity.

Exit codes: 0 ok, 2 input schema violation, 3 empty usable dataset,
4 fit failure, 5 unusable point-of-interest prior.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from rrgkit import dpl, pooling, rrg, spatial
from rrgkit.densify import VolumeProfile, calibrate, synthesize_series, write_calibration_json
from rrgkit.geo import GridSpec, cells_of_arrays
from rrgkit.rng import derive_rng
from rrgkit.spatial import build_spatial_model, generate_points

import numpy as np

logger = logging.getLogger("rrgkit")

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_EMPTY = 3
EXIT_FIT = 4
EXIT_PRIOR = 5


def _parse_bbox(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox must be lat0,lon0,lat1,lon1")
    return tuple(float(v) for v in parts)  # type: ignore[return-value]


def _grid_from_args(args: argparse.Namespace) -> GridSpec:
    lat0, lon0, lat1, lon1 = args.bbox
    return GridSpec.from_bbox(lat0, lon0, lat1, lon1, cell_size_m=args.cell_m)


def _time_range(args: argparse.Namespace, rides: list[rrg.RideRequest]) -> tuple[int, int]:
    t0, t1 = args.t0, args.t1
    if t0 is None or t1 is None:
        if not rides:
            raise rrg.EmptyRangeError("no rides to infer a time range from")
        ts = [r.t for r in rides]
        t0 = min(ts) if t0 is None else t0
        t1 = max(ts) + 1 if t1 is None else t1
    return int(t0), int(t1)


def cmd_build_rrg(args: argparse.Namespace) -> int:
    grid = _grid_from_args(args)
    rides = rrg.read_rides_csv(args.rides)
    t0, t1 = _time_range(args, rides)
    series = rrg.snapshot_series(rides, grid, args.interval_s, t0, t1)
    stats = [s for _, s in series]
    usable = sum(s.rides for s in stats)
    dropped = sum(s.dropped for s in stats)
    if usable == 0:
        print("error: no usable rides in range", file=sys.stderr)
        return EXIT_EMPTY
    if dropped:
        logger.warning("dropped %d rides with out-of-grid endpoints", dropped)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rrg.write_snapshot_csv(out / "snapshots.csv", stats, t0, args.interval_s)
    print(f"wrote {out / 'snapshots.csv'} ({len(stats)} intervals, {usable} rides, {dropped} dropped)")
    return EXIT_OK


def cmd_fit_dpl(args: argparse.Namespace) -> int:
    stats = rrg.read_snapshot_csv(args.snapshots)
    fit = dpl.fit_dpl(stats)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dpl.write_fit_json(out / "dpl.json", fit)
    dpl.write_plot_csv(out / "dpl_plot.csv", stats, fit)
    print(
        f"alpha={fit.alpha:.4f} c={fit.c:.4g} r2={fit.r_squared:.4f} "
        f"({fit.points_used} points, {fit.excluded} excluded)"
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if (args.p is None) != (args.q is None):
        print("error: --p and --q must be given together", file=sys.stderr)
        return EXIT_SCHEMA
    if (args.p is None) == (args.target_alpha is None):
        print("error: give either --p/--q or --target-alpha", file=sys.stderr)
        return EXIT_SCHEMA

    grid = _grid_from_args(args)
    poi, poi_dropped = spatial.read_poi_csv(args.pois, grid)
    if poi_dropped:
        logger.warning("dropped %d points of interest outside the grid", poi_dropped)

    history = None
    if args.rides:
        past = rrg.read_rides_csv(args.rides)
        lats = np.array([r.src.lat for r in past] + [r.dst.lat for r in past])
        lons = np.array([r.src.lon for r in past] + [r.dst.lon for r in past])
        rows, cols, ok = cells_of_arrays(lats, lons, grid)
        history = {grid.cell_at(int(r * grid.n_cols + c)) for r, c in zip(rows[ok], cols[ok])}

    subset = spatial.select_subset(poi, history)
    model = build_spatial_model(poi, grid, subset=subset, max_s=args.max_s, max_r=args.max_r)
    profile = VolumeProfile.parse(args.m_profile)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.target_alpha is not None:
        result = calibrate(
            args.target_alpha,
            model,
            profile,
            trial_budget=args.trial_budget,
            n_intervals=args.intervals,
            seed=args.seed,
        )
        write_calibration_json(out / "calibration.json", result)
        p, q = result.p, result.q
        print(
            f"calibrated p={p:.4f} q={q:.4f} achieved_alpha={result.achieved_alpha:.4f} "
            f"r2={result.r_squared:.4f} ({result.trials} trials)"
        )
    else:
        p, q = args.p, args.q

    rides = synthesize_series(model, p, q, profile, args.intervals, args.interval_s, args.t0, args.seed)
    rrg.write_rides_csv(out / "rides.csv", rides)
    if not rides:
        logger.warning("volume profile produced no rides")
    print(f"wrote {out / 'rides.csv'} ({len(rides)} rides over {args.intervals} intervals)")

    if args.points_csv:
        all_lats, all_lons, all_rows, all_cols = [], [], [], []
        ms = profile.sample(args.intervals, derive_rng(args.seed, "volume"))
        for k in range(args.intervals):
            la, lo, rw, cl = generate_points(
                model.kde, int(ms[k]), model.prior, model.walk, derive_rng(args.seed, "spatial", k)
            )
            all_lats.append(la)
            all_lons.append(lo)
            all_rows.append(rw)
            all_cols.append(cl)
        spatial.write_points_csv(
            args.points_csv,
            np.concatenate(all_lats) if all_lats else np.array([]),
            np.concatenate(all_lons) if all_lons else np.array([]),
            np.concatenate(all_rows) if all_rows else np.array([]),
            np.concatenate(all_cols) if all_cols else np.array([]),
        )
        print(f"wrote {args.points_csv}")
    return EXIT_OK


def cmd_poolability(args: argparse.Namespace) -> int:
    params = pooling.PoolingParams(dt_s=args.dt_s, ds_m=args.ds_m, dd_m=args.dd_m)
    rides = rrg.read_rides_csv(args.rides)
    if not rides:
        print("error: no rides in input", file=sys.stderr)
        return EXIT_EMPTY
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.whole:
        res = pooling.greedy_pool(rides, params)
        summary = {
            "total_rides": res.total,
            "pooled_rides": res.pooled,
            "overall_pct": res.poolability_pct,
            "groups": len(res.groups),
        }
        pooling.write_summary_json(out / "summary.json", summary)
        if args.dump_groups:
            pooling.write_groups_json(out / "groups.json", res.groups)
        print(f"poolability {res.poolability_pct:.2f}% ({res.pooled}/{res.total} rides)")
        return EXIT_OK

    t0, t1 = _time_range(args, rides)
    rows, groups = pooling.poolability_series(
        rides, params, args.interval_s, t0, t1, collect_groups=args.dump_groups
    )
    pooling.write_poolability_csv(out / "poolability.csv", rows)
    summary = pooling.summarize(rows)
    if args.compare:
        other = pooling.read_poolability_csv(args.compare)
        summary["compare"] = pooling.series_rmse(rows, other)
        print(f"RMSE vs {args.compare}: {summary['compare']['rmse']:.4f}")
    pooling.write_summary_json(out / "summary.json", summary)
    if args.dump_groups:
        pooling.write_groups_json(out / "groups.json", groups)
    print(
        f"wrote {out / 'poolability.csv'} ({len(rows)} intervals, "
        f"mean {summary['mean_pct']:.2f}%)"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrg", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out-dir", default="out", help="output directory (default: out)")

    def add_grid(p: argparse.ArgumentParser) -> None:
        p.add_argument("--bbox", type=_parse_bbox, required=True, help="lat0,lon0,lat1,lon1")
        p.add_argument("--cell-m", type=float, default=100.0, help="cell size in meters")

    def add_timing(p: argparse.ArgumentParser) -> None:
        p.add_argument("--interval-s", type=int, default=300, help="interval length in seconds")
        p.add_argument("--t0", type=int, default=None, help="range start (epoch s; default: data min)")
        p.add_argument("--t1", type=int, default=None, help="range end, exclusive (default: data max+1)")

    p_build = sub.add_parser("build-rrg", help="build per-interval graphs and snapshot stats")
    p_build.add_argument("--rides", required=True, help="rides CSV")
    add_grid(p_build)
    add_timing(p_build)
    add_common(p_build)
    p_build.set_defaults(func=cmd_build_rrg)

    p_fit = sub.add_parser("fit-dpl", help="fit e = C * n^alpha over snapshot stats")
    p_fit.add_argument("--snapshots", required=True, help="snapshots CSV from build-rrg")
    add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit_dpl)

    p_synth = sub.add_parser("synth", help="generate synthetic ride requests")
    p_synth.add_argument("--pois", required=True, help="points-of-interest CSV (lat,lon[,count])")
    p_synth.add_argument("--rides", default=None, help="historical rides CSV to pick active cells")
    add_grid(p_synth)
    p_synth.add_argument("--interval-s", type=int, default=300, help="interval length in seconds")
    p_synth.add_argument("--intervals", type=int, default=2016, help="number of intervals")
    p_synth.add_argument("--t0", type=int, default=0, help="timestamp of the first interval")
    p_synth.add_argument("--seed", type=int, required=True, help="64-bit generation seed")
    p_synth.add_argument("--p", type=float, default=None, help="fresh-destination probability")
    p_synth.add_argument("--q", type=float, default=None, help="geometric outlink parameter")
    p_synth.add_argument("--target-alpha", type=float, default=None, help="calibrate (p, q) to this factor")
    p_synth.add_argument("--trial-budget", type=int, default=96, help="max calibration evaluations")
    p_synth.add_argument("--m-profile", default="loguniform:20,2000", help="const:N or loguniform:lo,hi")
    p_synth.add_argument("--max-s", type=int, default=5, help="walk step budget")
    p_synth.add_argument("--max-r", type=float, default=None, help="walk reward bound (default: auto)")
    p_synth.add_argument("--points-csv", default=None, help="also dump generated points here")
    add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_pool = sub.add_parser("poolability", help="measure ride poolability")
    p_pool.add_argument("--rides", required=True, help="rides CSV")
    add_timing(p_pool)
    p_pool.add_argument("--dt-s", type=float, default=300.0, help="request-gap limit (s)")
    p_pool.add_argument("--ds-m", type=float, default=100.0, help="source radius (m)")
    p_pool.add_argument("--dd-m", type=float, default=1000.0, help="destination radius (m)")
    p_pool.add_argument("--whole", action="store_true", help="pool the whole dataset, no intervals")
    p_pool.add_argument("--compare", default=None, help="another poolability CSV to diff against")
    p_pool.add_argument("--dump-groups", action="store_true", help="also write groups.json")
    add_common(p_pool)
    p_pool.set_defaults(func=cmd_poolability)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("RRG_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except rrg.SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except rrg.EmptyRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (dpl.InsufficientDataError, dpl.DegenerateXError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (spatial.ZeroMassError, spatial.EmptySubsetError, spatial.TooFewPointsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRIOR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
