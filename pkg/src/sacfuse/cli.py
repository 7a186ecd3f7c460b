"""Command line front end: ``sacfuse synth|fuse|eval|report``.

Exit status is 0 on success, 1 for usage errors, 2 for bad or missing
input data and 3 for internal failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .baselines import ConsistencyConfig, concat_fuse, consistency_fuse, multiray_fuse
from .correspond import GroupingConfig, build_groups
from .evaluation import evaluate
from .netlet import SacConfig, fuse
from .scene_io import PointCloud, SceneFormatError, load_camera_set, load_point_cloud, write_camera_set, write_point_cloud
from .synth import generate_scene, load_scene_spec
from .validation import check_views, parse_thresholds

logger = logging.getLogger("sacfuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
METHODS = ("sac", "consistency", "multiray", "concat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_fusion_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("select-and-combine")
    g.add_argument("--tau", type=float, default=SacConfig.tau, help="edge cutoff distance in meters (default %(default)s)")
    g.add_argument("--superpixels", dest="use_superpixels", action="store_true", default=False,
                   help="use SLIC cluster centroids as netlet nodes")
    g.add_argument("--superpixel-size", type=int, default=SacConfig.superpixel_size,
                   help="target pixels per cluster (default %(default)s)")
    g.add_argument("--exact-solver-limit", type=int, default=SacConfig.exact_solver_limit)
    g.add_argument("--icm-max-sweeps", type=int, default=SacConfig.icm_max_sweeps)
    g = p.add_argument_group("grouping")
    g.add_argument("--strategy", choices=("reprojection", "proximity", "precomputed"), default="reprojection")
    g.add_argument("--reprojection-tol", dest="reprojection_relative_depth_tol", type=float,
                   default=GroupingConfig.reprojection_relative_depth_tol,
                   help="relative depth tolerance for reprojection grouping (default %(default)s)")
    g.add_argument("--proximity-radius", type=float, default=GroupingConfig.proximity_radius,
                   help="radius in meters for proximity grouping (default %(default)s)")
    g.add_argument("--max-group-size", type=int, default=GroupingConfig.max_group_size)
    g.add_argument("--correspondences", dest="correspondence_file", default=None,
                   help="text file of 'viewA uA vA viewB uB vB' records (precomputed strategy)")
    g = p.add_argument_group("baselines")
    g.add_argument("--relative-depth-tol", type=float, default=ConsistencyConfig.relative_depth_tol,
                   help="consistency redundancy tolerance (default %(default)s)")
    g.add_argument("--occlusion-margin", type=float, default=ConsistencyConfig.occlusion_margin)
    g.add_argument("--min-rays", type=int, default=2, help="smallest group that multiray triangulates")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sacfuse", description="Select-and-combine depth map fusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("spec", help="JSON scene spec")
    p.add_argument("out_dir")

    p = sub.add_parser("fuse", help="fuse a camera set into one point cloud")
    p.add_argument("in_dir")
    p.add_argument("-o", "--out", required=True, help="output PLY; stats go to <out>.stats.json")
    p.add_argument("--method", choices=METHODS, default="sac")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", help="JSON file of flag values; explicit flags override it")
    _add_fusion_flags(p)

    p = sub.add_parser("eval", help="score a cloud against a pre-registered reference")
    p.add_argument("recon")
    p.add_argument("ref")
    p.add_argument("--thresholds", default="0.02,0.05", help="comma-separated meters (default %(default)s)")
    p.add_argument("--report", help="write the reports as JSON (a list, one object per threshold)")
    p.add_argument("--text", help="write the reports as key: value text")

    p = sub.add_parser("report", help="fuse with every method and tabulate F1 against a reference")
    p.add_argument("in_dir")
    p.add_argument("ref")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--thresholds", default="0.02,0.05")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--json", dest="json_out", help="write all reports to this JSON file")
    _add_fusion_flags(p)
    return parser


def _apply_config(parser, argv, args):
    """Re-parse with defaults taken from ``--config`` so explicit flags still win."""
    if not getattr(args, "config", None):
        return args
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SceneFormatError(args.config, "config file not found") from None
    except json.JSONDecodeError as exc:
        raise SceneFormatError(args.config, f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SceneFormatError(args.config, "config must be a JSON object")
    known = set(vars(args)) - {"command", "config", "in_dir", "out", "ref", "verbose"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**data)
    return parser.parse_args(argv)


def _configs(args):
    sac = SacConfig(tau=args.tau, use_superpixels=args.use_superpixels,
                    exact_solver_limit=args.exact_solver_limit, icm_max_sweeps=args.icm_max_sweeps,
                    superpixel_size=args.superpixel_size)
    grouping = GroupingConfig(strategy=args.strategy,
                              reprojection_relative_depth_tol=args.reprojection_relative_depth_tol,
                              proximity_radius=args.proximity_radius, max_group_size=args.max_group_size,
                              correspondence_file=args.correspondence_file)
    consistency = ConsistencyConfig(args.relative_depth_tol, args.occlusion_margin)
    return sac, grouping, consistency


def run_method(method: str, views, args):
    sac, grouping, consistency = _configs(args)
    threads = max(1, args.threads)
    if method == "sac":
        return fuse(views, sac, grouping, n_jobs=threads)
    if method == "consistency":
        return consistency_fuse(views, consistency)
    if method == "multiray":
        return multiray_fuse(build_groups(views, grouping), views, args.min_rays)
    if method == "concat":
        return concat_fuse(views)
    raise UsageError(f"unknown method {method!r}")


def cmd_synth(args) -> int:
    spec = load_scene_spec(args.spec)
    views, ref = generate_scene(spec)
    out = Path(args.out_dir)
    write_camera_set(out, views)
    write_point_cloud(ref, out / "reference.ply")
    print(f"wrote {len(views)} views and {len(ref)} reference points to {out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    views = check_views(load_camera_set(args.in_dir))
    t0 = time.perf_counter()
    cloud = run_method(args.method, views, args)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    write_point_cloud(cloud.to_point_cloud(), out)
    stats = dict(cloud.stats, method=args.method)
    stats["per_view_counts"] = {str(k): v for k, v in stats["per_view_counts"].items()}
    Path(f"{out}.stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    logger.info("fused in %.2f s", elapsed)
    print(f"{args.method}: {stats['input_points']} -> {stats['output_points']} points, wrote {out}")
    return EXIT_OK


def _f1_table(rows) -> str:
    """Rows of (name, reports) as a table with one column per threshold."""
    thresholds = [r.threshold for r in rows[0][1]]
    head = "method".ljust(12) + "".join(f"t={t:g} acc/comp/F1".rjust(26) for t in thresholds)
    lines = [head]
    for name, reports in rows:
        cells = "".join(f"{r.accuracy:.4f}/{r.completeness:.4f}/{r.f1:.4f}".rjust(26) for r in reports)
        lines.append(name.ljust(12) + cells)
    return "\n".join(lines)


def _load_cloud(path) -> PointCloud:
    if not Path(path).exists():
        raise SceneFormatError(path, "file not found")
    return load_point_cloud(path)


def cmd_eval(args) -> int:
    thresholds = parse_thresholds(args.thresholds)
    recon, ref = _load_cloud(args.recon), _load_cloud(args.ref)
    reports = evaluate(recon, ref, thresholds)
    print(_f1_table([(Path(args.recon).stem, reports)]))
    print(f"mean cloud-to-cloud: {reports[0].mean_cloud_to_cloud:.6f} m")
    if args.report:
        Path(args.report).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    if args.text:
        Path(args.text).write_text("\n".join(r.to_text() for r in reports), encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    thresholds = parse_thresholds(args.thresholds)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s): {', '.join(bad)}")
    views = check_views(load_camera_set(args.in_dir))
    ref = _load_cloud(args.ref)
    rows, dump = [], {}
    for m in methods:
        cloud = run_method(m, views, args)
        reports = evaluate(cloud, ref, thresholds, input_points=cloud.stats["input_points"])
        rows.append((m, reports))
        dump[m] = [r.to_dict() for r in reports]
    print(_f1_table(rows))
    for m, reports in rows:
        r = reports[0]
        print(f"{m}: points={r.output_points} reduction={r.redundancy_reduction:.4f} "
              f"c2c={r.mean_cloud_to_cloud:.6f} dominant_2={r.dominant_k_fraction.get(2, 1.0):.4f}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(dump, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "fuse": cmd_fuse, "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        args = _apply_config(parser, argv, args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort report
        logger.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
