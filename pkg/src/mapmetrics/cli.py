"""Command-line front end.

Subcommands: synth, perturb, register, evaluate, bench. Every long
option can also be supplied through an environment variable named
MAPEVAL_<OPTION> (dashes become underscores, upper case); explicit
flags win over the environment, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .cloud import export_error_map, read_cloud, write_cloud
from .figures import render_cdf, render_error_histogram, render_runtimes, save_figure
from .geometry import RigidTransform, apply_transform
from .perturb import PerturbSpec, SceneSpec, apply_perturbation, synth_scene
from .pipeline import SKIPPABLE, EvaluationConfig, benchmark_stages, evaluate_maps
from .registration import IcpParams, icp_point_to_plane
from .report import write_cdf_csv, write_report
from .voxel import mixture_bound

ENV_PREFIX = "MAPEVAL_"

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off", ""})


def _env(option: str, fallback, cast):
    """Default for an option: the environment value if set, else fallback."""
    raw = os.environ.get(ENV_PREFIX + option.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ValueError(
            f"invalid {ENV_PREFIX}{option.upper().replace('-', '_')}={raw!r}: {exc}"
        ) from exc


def _env_flag(option: str) -> bool:
    def cast(raw: str) -> bool:
        word = raw.strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ValueError("expected a boolean like 1/0/true/false")

    return _env(option, False, cast)


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split())


def _add_io(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gt", default=_env("gt", None, str),
                        help="ground-truth cloud (.ply or .pcd)")
    parser.add_argument("--est", default=_env("est", None, str),
                        help="evaluated cloud (.ply or .pcd)")
    parser.add_argument("--out", default=_env("out", None, str),
                        help="output directory")
    parser.add_argument("--ascii", action="store_true",
                        default=_env_flag("ascii"),
                        help="write ASCII clouds instead of binary")


def _add_registration(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--init-pose", nargs="+", default=_env(
        "init-pose", None, lambda raw: raw.split()),
        metavar="POSE",
        help="initial alignment: a text file of 16 numbers, or 16 "
             "row-major values inline")
    parser.add_argument("--max-iterations", type=int,
                        default=_env("max-iterations", 50, int))
    parser.add_argument("--max-correspondence", type=float,
                        default=_env("max-correspondence", 1.0, float),
                        help="ICP association gate in meters")


def _add_eval_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau", type=float, default=_env("tau", 0.2, float),
                        help="inlier gate for AC/COM, meters (default 0.2)")
    parser.add_argument("--voxel-size", type=float,
                        default=_env("voxel-size", 3.0, float),
                        help="voxel edge in meters; 2-3 works well indoors, "
                             "3-4 outdoors (default 3.0)")
    parser.add_argument("--mme-radius", type=float,
                        default=_env("mme-radius", 0.1, float),
                        help="entropy neighborhood radius, meters (default 0.1)")
    parser.add_argument("--min-voxel-points", type=int,
                        default=_env("min-voxel-points", 10, int),
                        help="discard sparser voxels (default 10)")
    parser.add_argument("--mixture-components", type=int,
                        default=_env("mixture-components", 2, int),
                        help="components of the error mixture fit (default 2)")
    parser.add_argument("--grid-origin", nargs=3, type=float,
                        default=_env("grid-origin", (0.0, 0.0, 0.0), _floats),
                        metavar=("X", "Y", "Z"))
    parser.add_argument("--threads", type=int, default=_env("threads", 0, int),
                        help="worker threads for neighbor queries; 0 = all cores")
    parser.add_argument("--seed", type=int, default=_env("seed", 0, int),
                        help="seed recorded in the report")
    parser.add_argument("--register", action="store_true",
                        default=_env_flag("register"),
                        help="align est to gt before evaluating")
    parser.add_argument("--no-figures", action="store_true",
                        default=_env_flag("no-figures"),
                        help="skip PNG rendering")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapmetrics",
        description="Point-cloud map quality metrics and registration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a planar test scene")
    p_synth.add_argument("--kind", choices=("box", "sheet", "corridor"),
                         default=_env("kind", "box", str))
    p_synth.add_argument("--extent", nargs=3, type=float,
                         default=_env("extent", (10.0, 8.0, 3.0), _floats),
                         metavar=("LX", "LY", "LZ"))
    p_synth.add_argument("--density", type=float,
                         default=_env("density", 500.0, float),
                         help="points per square meter")
    p_synth.add_argument("--seed", type=int, default=_env("seed", 0, int))
    p_synth.add_argument("--out", default=_env("out", None, str),
                         help="output cloud path (.ply or .pcd)")
    p_synth.add_argument("--ascii", action="store_true",
                         default=_env_flag("ascii"))
    p_synth.set_defaults(func=_cmd_synth)

    p_pert = sub.add_parser("perturb", help="noise or outlier degradation")
    p_pert.add_argument("--input", default=_env("input", None, str),
                        help="cloud to degrade")
    p_pert.add_argument("--out", default=_env("out", None, str),
                        help="output cloud path")
    p_pert.add_argument("--mode", choices=("noise", "outlier"),
                        default=_env("mode", "noise", str))
    p_pert.add_argument("--fraction", type=float,
                        default=_env("fraction", 1.0, float),
                        help="share of points displaced, in (0, 1]")
    p_pert.add_argument("--sigma-cm", type=float,
                        default=_env("sigma-cm", 1.0, float),
                        help="displacement sigma per axis, centimeters")
    p_pert.add_argument("--seed", type=int, default=_env("seed", 0, int))
    p_pert.add_argument("--ascii", action="store_true",
                        default=_env_flag("ascii"))
    p_pert.set_defaults(func=_cmd_perturb)

    p_reg = sub.add_parser("register", help="point-to-plane ICP alignment")
    _add_io(p_reg)
    _add_registration(p_reg)
    p_reg.add_argument("--threads", type=int, default=_env("threads", 0, int))
    p_reg.set_defaults(func=_cmd_register)

    p_eval = sub.add_parser("evaluate", help="run the metric suite")
    _add_io(p_eval)
    _add_registration(p_eval)
    _add_eval_options(p_eval)
    p_eval.add_argument("--skip", action="append", default=_env(
        "skip", None, lambda raw: [raw]),
        metavar="METRIC",
        help="metric to skip (repeatable, comma lists accepted): "
             + ",".join(sorted(SKIPPABLE)))
    p_eval.add_argument("--error-map-max", type=float,
                        default=_env("error-map-max", None, float),
                        help="distance shown as full red in the error map "
                             "(default: tau)")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_bench = sub.add_parser("bench", help="time each pipeline stage")
    _add_io(p_bench)
    _add_registration(p_bench)
    _add_eval_options(p_bench)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise ValueError(
                f"--{name.replace('_', '-')} is required (or set "
                f"{ENV_PREFIX}{name.upper()})"
            )


def _parse_init_pose(tokens) -> RigidTransform | None:
    if tokens is None:
        return None
    if len(tokens) == 16:
        values = np.array([float(t) for t in tokens])
    elif len(tokens) == 1:
        values = np.loadtxt(tokens[0]).reshape(-1)
        if values.size != 16:
            raise ValueError(
                f"pose file {tokens[0]} holds {values.size} numbers, expected 16"
            )
    else:
        raise ValueError(
            f"--init-pose takes a file path or 16 numbers, got {len(tokens)} tokens"
        )
    return RigidTransform.from_matrix(values.reshape(4, 4))


def _write_pose(path, transform: RigidTransform) -> None:
    with open(path, "w", encoding="ascii") as f:
        for row in transform.as_matrix():
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _skip_set(raw) -> frozenset:
    if not raw:
        return frozenset()
    tokens = set()
    for chunk in raw:
        tokens.update(t.strip() for t in chunk.split(",") if t.strip())
    return frozenset(tokens)


def _config_from(args: argparse.Namespace, skip=frozenset()) -> EvaluationConfig:
    return EvaluationConfig(
        tau=args.tau,
        voxel_size=args.voxel_size,
        mme_radius=args.mme_radius,
        min_voxel_points=args.min_voxel_points,
        mixture_components=args.mixture_components,
        seed=args.seed,
        threads=args.threads,
        skip=skip,
        grid_origin=tuple(args.grid_origin),
        error_map_max=getattr(args, "error_map_max", None),
    )


def _fmt(value, unit: str = "", digits: int = 4) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{digits}f}{unit}"


def _cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "out")
    spec = SceneSpec(kind=args.kind, extents=tuple(args.extent),
                     density=args.density, seed=args.seed)
    cloud = synth_scene(spec)
    write_cloud(args.out, cloud, ascii_mode=args.ascii)
    print(f"wrote {len(cloud)} points to {args.out}")
    return 0


def _cmd_perturb(args: argparse.Namespace) -> int:
    _require(args, "input", "out")
    cloud = read_cloud(args.input)
    spec = PerturbSpec(mode=args.mode, fraction=args.fraction,
                       sigma_cm=args.sigma_cm, seed=args.seed)
    write_cloud(args.out, apply_perturbation(cloud, spec), ascii_mode=args.ascii)
    print(f"degraded {len(cloud)} points ({args.mode}, fraction={args.fraction}, "
          f"sigma={args.sigma_cm} cm) -> {args.out}")
    return 0


def _cmd_register(args: argparse.Namespace) -> int:
    _require(args, "gt", "est", "out")
    gt = read_cloud(args.gt)
    est = read_cloud(args.est)
    init = _parse_init_pose(args.init_pose)
    params = IcpParams(max_iterations=args.max_iterations,
                       max_correspondence_distance=args.max_correspondence)
    workers = -1 if args.threads == 0 else args.threads
    result = icp_point_to_plane(est, gt, init=init, params=params,
                                workers=workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cloud(out / "est_aligned.ply", apply_transform(result.transform, est),
                ascii_mode=args.ascii)
    _write_pose(out / "pose.txt", result.transform)
    stats = {
        "iterations": result.iterations,
        "converged": result.converged,
        "residual_m": result.residual,
        "residual_history_m": list(result.residual_history),
    }
    with open(out / "icp_stats.json", "w", encoding="ascii") as f:
        json.dump(stats, f, indent=2)
        f.write("\n")
    state = "converged" if result.converged else "hit the iteration cap"
    print(f"ICP {state} after {result.iterations} iterations, "
          f"residual {100.0 * result.residual:.3f} cm")
    print(f"artifacts in {out}")
    return 0


_ABSENCE_HINTS = {
    "ac_cm": "no ground-truth point found an est neighbor within tau",
    "com": "completeness unavailable",
    "cd_cm": "chamfer distance unavailable",
    "mme": "no point had enough neighbors inside the entropy radius",
    "awd_cm": "the voxel grids share no occupied voxel",
    "scs": "no field voxel has two or more field neighbors",
    "w_bound_cm": "too few field voxels for the mixture fit",
}


def _cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, "gt", "est", "out")
    skip = _skip_set(args.skip)
    config = _config_from(args, skip)
    gt = read_cloud(args.gt)
    est = read_cloud(args.est)
    init = _parse_init_pose(args.init_pose)
    result = evaluate_maps(gt, est, config, register=args.register, init=init)
    report = result.report

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out, field=result.field)
    write_cdf_csv(report.cdf, out / "cdf.csv")

    if result.est_to_gt_distances is not None:
        limit = config.error_map_max if config.error_map_max is not None else config.tau
        colored = export_error_map(result.aligned_est,
                                   result.est_to_gt_distances, limit)
        write_cloud(out / "error_map.ply", colored, ascii_mode=args.ascii)

    mixture = None
    if result.field is not None and len(result.field) >= config.mixture_components:
        mixture = mixture_bound(result.field, config.mixture_components)
    if not args.no_figures:
        if report.cdf:
            save_figure(render_cdf(report.cdf, report.metrics.w_bound_cm),
                        out / "cdf.png")
        if result.field is not None and len(result.field) > 0:
            save_figure(
                render_error_histogram(100.0 * result.field.distances, mixture),
                out / "error_hist.png",
            )

    m = report.metrics
    rows = [
        ("AC", _fmt(m.ac_cm, " cm")),
        ("COM", _fmt(m.com)),
        ("CD", _fmt(m.cd_cm, " cm")),
        ("MME", _fmt(m.mme)),
        ("AWD", _fmt(m.awd_cm, " cm")),
        ("SCS", _fmt(m.scs)),
        ("W_BOUND", _fmt(m.w_bound_cm, " cm")),
    ]
    width = max(len(name) for name, _ in rows)
    for name, text in rows:
        print(f"{name:<{width}}  {text}")

    skipped_keys = {"ac": "ac_cm", "com": "com", "cd": "cd_cm", "mme": "mme",
                    "awd": "awd_cm", "scs": "scs"}
    requested_absent = [
        key for key, value in vars(m).items()
        if value is None and key not in
        {skipped_keys[token] for token in skip}
        and not (key == "w_bound_cm" and "awd" in skip)
    ]
    for key in requested_absent:
        print(f"warning: {key} is absent: {_ABSENCE_HINTS[key]}", file=sys.stderr)
    print(f"artifacts in {out}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    _require(args, "gt", "est", "out")
    config = _config_from(args)
    gt = read_cloud(args.gt)
    est = read_cloud(args.est)
    init = _parse_init_pose(args.init_pose)
    times = benchmark_stages(gt, est, config, register=args.register, init=init)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timings.json", "w", encoding="ascii") as f:
        json.dump(times, f, indent=2)
        f.write("\n")
    if not args.no_figures:
        save_figure(render_runtimes(times), out / "runtimes.png")

    width = max(len(name) for name in times)
    for name, value in times.items():
        text = "n/a" if value is None else f"{value:.4f} s"
        print(f"{name:<{width}}  {text}")
    print(f"artifacts in {out}")
    return 0


def main(argv=None) -> int:
    try:
        parser = _build_parser()
    except ValueError as exc:  # malformed environment override
        print(f"error: {exc}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
