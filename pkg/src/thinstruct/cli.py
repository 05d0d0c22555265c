"""Command-line entry points.

Subcommands: edges2d, vessels3d, fit-points, fit-ridges, synth, eval.
Every parameter can come from a JSON file via --config; explicit flags
override the file, which overrides the built-in defaults. Exit codes:
0 success, 2 input/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigurationError, DataFormatError, NumericalError
from .eval import evaluate_masks
from .geometry import CurvatureTerm, project_onto_line
from .pipelines import detect_edges_2d, detect_vessels_3d, fit_point_cloud, \
    fit_tangents_fixed_q
from .solver import TrustRegionConfig
from . import synth

COMMON_DEFAULTS = dict(out_dir=".", seed=0, verbose=0, threads=1)

DEFAULTS = {
    "edges2d": dict(sigma=1.0, gamma=0.25, tau=1.0, curvature="squared",
                    epsilon=0.1, scale=2, q_min=0.0, init="perpendicular",
                    normalize="std", lambda_intercept=1.8, lambda_slope=1.4,
                    outer_tol=1e-6, max_outer=10, mf_tol=1e-6,
                    mf_max_sweeps=50, lm_iters=12, **COMMON_DEFAULTS),
    "vessels3d": dict(beta=0.5, k=20.0, keep=0.15, gamma=0.25,
                      curvature="squared", epsilon=0.1, alignment_power=1,
                      outer_tol=1e-6, max_outer=10, mf_tol=1e-6,
                      mf_max_sweeps=50, lm_iters=12, **COMMON_DEFAULTS),
    "fit-points": dict(knn=4, sigma=1.0, curvature="squared", epsilon=0.1,
                       lm_iters=50, **COMMON_DEFAULTS),
    "fit-ridges": dict(low=None, high=None, beta=0.5, k=20.0, gamma=0.25,
                       curvature="squared", epsilon=0.1, alignment_power=1,
                       lm_iters=12, **COMMON_DEFAULTS),
    "synth": dict(radius=20.0, samples=64, noise=0.0, length=40, gap=8,
                  size=64, vertices=5, offset=0.3, angle=0.0, shape="helix",
                  tube_radius=2.0, dir_noise=0.0, **COMMON_DEFAULTS),
    "eval": dict(rho=2.0, **COMMON_DEFAULTS),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="thinstruct",
        description="Thin-structure detection and sub-pixel delineation.")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=S)
        p.add_argument("--config", help="JSON file with parameter defaults")
        p.add_argument("--out-dir", help="output directory (default: .)")
        p.add_argument("--seed", type=int, help="random seed for generators")
        p.add_argument("--threads", type=int, help="worker cap (advisory)")
        p.add_argument("-v", "--verbose", action="count")
        return p

    p = add("edges2d", "detect sub-pixel edges in a grayscale PGM image")
    p.add_argument("input", help="input image (PGM P2/P5)")
    for flag, typ in [("--sigma", float), ("--gamma", float), ("--tau", float),
                      ("--epsilon", float), ("--scale", int),
                      ("--q-min", float), ("--lambda-intercept", float),
                      ("--lambda-slope", float), ("--outer-tol", float),
                      ("--max-outer", int), ("--mf-tol", float),
                      ("--mf-max-sweeps", int), ("--lm-iters", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--curvature", choices=["squared", "abs", "absolute"])
    p.add_argument("--init", choices=["perpendicular", "paper-literal"])
    p.add_argument("--normalize", choices=["std", "variance"])

    p = add("vessels3d", "extract vessel center-line tangents from a vfield")
    p.add_argument("input", help="input vessel field (.vfield)")
    for flag, typ in [("--beta", float), ("--k", float), ("--keep", float),
                      ("--gamma", float), ("--epsilon", float),
                      ("--alignment-power", int), ("--outer-tol", float),
                      ("--max-outer", int), ("--mf-tol", float),
                      ("--mf-max-sweeps", int), ("--lm-iters", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--curvature", choices=["squared", "abs", "absolute"])

    p = add("fit-points", "fit tangent lines to a point cloud CSV")
    p.add_argument("input", help="points CSV with columns x,y[,z]")
    p.add_argument("--knn", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lm-iters", type=int)
    p.add_argument("--curvature", choices=["squared", "abs", "absolute"])

    p = add("fit-ridges", "hysteresis ridge detection + fixed-Q tangent fit")
    p.add_argument("input", help="input vessel field (.vfield)")
    p.add_argument("--low", type=float)
    p.add_argument("--high", type=float)
    for flag, typ in [("--beta", float), ("--k", float), ("--gamma", float),
                      ("--epsilon", float), ("--alignment-power", int),
                      ("--lm-iters", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--curvature", choices=["squared", "abs", "absolute"])

    p = add("synth", "generate synthetic instances with ground truth")
    p.add_argument("kind", choices=["circle", "line", "square",
                                    "rounded-corner", "disk", "polygon",
                                    "gap-image", "step-edge", "tube3d"])
    for flag, typ in [("--radius", float), ("--samples", int),
                      ("--noise", float), ("--length", int), ("--gap", int),
                      ("--size", int), ("--vertices", int),
                      ("--offset", float), ("--angle", float),
                      ("--tube-radius", float), ("--dir-noise", float)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--shape", choices=["helix", "straight", "y"])

    p = add("eval", "precision/recall of a predicted mask vs ground truth")
    p.add_argument("pred", help="predicted probability mask (PGM)")
    p.add_argument("truth", help="ground-truth mask (PGM, nonzero = true)")
    p.add_argument("--rho", type=float)
    return parser


def _merge_config(args) -> dict:
    provided = {k: v for k, v in vars(args).items() if k != "command"}
    cfg = dict(DEFAULTS[args.command])
    path = provided.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigurationError(
                f"{path}: unknown config keys {sorted(unknown)}")
        cfg.update(loaded)
        cfg["config"] = str(path)
    cfg.update(provided)
    return cfg


def _curvature_term(cfg) -> CurvatureTerm:
    kind = {"abs": "absolute"}.get(cfg["curvature"], cfg["curvature"])
    return CurvatureTerm(kind, cfg.get("epsilon", 0.1))


def _out_dir(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k not in ("input",)}


def _report_base(cfg, command, started) -> dict:
    return {"command": command, "config": _echo(cfg),
            "elapsed_s": time.time() - started}


def cmd_edges2d(cfg) -> int:
    started = time.time()
    image = io.read_pgm(cfg["input"]).astype(float)
    state, mask, sites = detect_edges_2d(
        image, sigma=cfg["sigma"], gamma=cfg["gamma"],
        curvature=_curvature_term(cfg), tau=cfg["tau"], scale=cfg["scale"],
        q_min=cfg["q_min"], init_mode=cfg["init"], normalize=cfg["normalize"],
        lambda_intercept=cfg["lambda_intercept"],
        lambda_slope=cfg["lambda_slope"], outer_tol=cfg["outer_tol"],
        max_outer=cfg["max_outer"], mf_tol=cfg["mf_tol"],
        mf_max_sweeps=cfg["mf_max_sweeps"],
        tr_config=TrustRegionConfig(max_iters=cfg["lm_iters"]))
    out = _out_dir(cfg)
    points = project_onto_line(state.lines, sites.positions)
    io.write_tangents_csv_2d(out / "tangents.csv", np.arange(sites.n),
                             sites.positions, points, state.lines.direction,
                             state.q)
    io.write_mask_pgm(out / "subpixel.pgm", mask.values)
    report = _report_base(cfg, "edges2d", started)
    report.update(converged=state.converged, outer_iters=state.outer_iters,
                  n_sites=sites.n, dropped_points=mask.dropped,
                  n_confident=int((state.q >= 0.5).sum()),
                  n_candidate=int((state.q >= 0.25).sum()),
                  trace=state.trace)
    io.write_report(out / "report.json", report)
    print(f"edges2d: {sites.n} sites, {report['n_confident']} with q>=1/2, "
          f"outputs in {out}")
    return 0


def cmd_vessels3d(cfg) -> int:
    started = time.time()
    field = io.read_vfield(cfg["input"])
    state, vs = detect_vessels_3d(
        field, beta=cfg["beta"], k=cfg["k"], keep_fraction=cfg["keep"],
        gamma=cfg["gamma"], curvature=_curvature_term(cfg),
        alignment_power=cfg["alignment_power"], outer_tol=cfg["outer_tol"],
        max_outer=cfg["max_outer"], mf_tol=cfg["mf_tol"],
        mf_max_sweeps=cfg["mf_max_sweeps"],
        tr_config=TrustRegionConfig(max_iters=cfg["lm_iters"]))
    out = _out_dir(cfg)
    io.write_tangents_csv_3d(out / "tangents.csv", vs.voxel_ids,
                             vs.sites.positions, state.lines.direction,
                             state.q)
    report = _report_base(cfg, "vessels3d", started)
    report.update(converged=state.converged, outer_iters=state.outer_iters,
                  n_sites=vs.sites.n,
                  n_confident=int((state.q >= 0.5).sum()), trace=state.trace)
    io.write_report(out / "report.json", report)
    print(f"vessels3d: {vs.sites.n} voxels retained, "
          f"{report['n_confident']} with q>=1/2, outputs in {out}")
    return 0


def cmd_fit_points(cfg) -> int:
    started = time.time()
    pts = io.read_points_csv(cfg["input"])
    lines, stats = fit_point_cloud(
        pts, sigma=cfg["sigma"], curvature=_curvature_term(cfg),
        k_nn=cfg["knn"], tr_config=TrustRegionConfig(max_iters=cfg["lm_iters"]))
    out = _out_dir(cfg)
    q = np.ones(len(pts))
    ids = np.arange(len(pts))
    if pts.shape[1] == 2:
        io.write_tangents_csv_2d(out / "tangents.csv", ids, pts,
                                 project_onto_line(lines, pts),
                                 lines.direction, q)
    else:
        io.write_tangents_csv_3d(out / "tangents.csv", ids, pts,
                                 lines.direction, q)
    report = _report_base(cfg, "fit-points", started)
    report.update(n_points=len(pts), solver_stats=stats)
    io.write_report(out / "report.json", report)
    print(f"fit-points: {len(pts)} points, outputs in {out}")
    return 0


def cmd_fit_ridges(cfg) -> int:
    started = time.time()
    if cfg["low"] is None or cfg["high"] is None:
        raise ConfigurationError("fit-ridges requires --low and --high")
    field = io.read_vfield(cfg["input"])
    fit = fit_tangents_fixed_q(
        field, cfg["low"], cfg["high"], beta=cfg["beta"], k=cfg["k"],
        gamma=cfg["gamma"], curvature=_curvature_term(cfg),
        alignment_power=cfg["alignment_power"],
        tr_config=TrustRegionConfig(max_iters=cfg["lm_iters"]))
    out = _out_dir(cfg)
    io.write_vmask(out / "ridges.vmask", fit.mask)
    io.write_tangents_csv_3d(out / "tangents.csv", fit.voxel_ids,
                             fit.sites.positions, fit.lines.direction,
                             np.ones(len(fit.voxel_ids)))
    report = _report_base(cfg, "fit-ridges", started)
    report.update(n_ridge=int(fit.mask.sum()), solver_stats=fit.stats)
    io.write_report(out / "report.json", report)
    print(f"fit-ridges: {report['n_ridge']} ridge voxels, outputs in {out}")
    return 0


def cmd_synth(cfg) -> int:
    started = time.time()
    out = _out_dir(cfg)
    kind, seed, noise = cfg["kind"], cfg["seed"], cfg["noise"]
    extra = {}
    if kind in ("circle", "line", "square", "rounded-corner"):
        if kind == "circle":
            pts, tan = synth.circle_points(cfg["radius"], cfg["samples"],
                                           noise, seed)
        elif kind == "line":
            pts, tan = synth.line_points(cfg["length"], cfg["samples"],
                                         noise, seed, angle=cfg["angle"])
        elif kind == "square":
            pts, tan = synth.square_points(cfg["radius"],
                                           max(2, cfg["samples"] // 4),
                                           noise, seed)
        else:
            pts, tan = synth.rounded_corner_points(
                cfg["length"], cfg["radius"], cfg["samples"], noise, seed)
        io.write_points_csv(out / "points.csv", pts)
        with open(out / "truth.csv", "w") as fh:
            fh.write("x,y,tx,ty\n")
            for p, t in zip(pts, tan):
                fh.write(f"{p[0]!r},{p[1]!r},{t[0]!r},{t[1]!r}\n")
        extra["n_points"] = len(pts)
    elif kind == "step-edge":
        img, edge_x = synth.step_edge_image(cfg["size"], cfg["size"],
                                            cfg["offset"], noise=noise,
                                            seed=seed)
        io.write_pgm(out / "image.pgm", np.rint(img).astype(np.uint8),
                     maxval=255)
        mask = np.zeros(img.shape, dtype=np.uint8)
        mask[:, int(round(edge_x))] = 255
        io.write_pgm(out / "truth_mask.pgm", mask, maxval=255)
        extra["edge_x"] = edge_x
    elif kind == "disk":
        img, center, radius = synth.disk_image(cfg["size"], cfg["radius"],
                                               noise=noise, seed=seed)
        io.write_pgm(out / "image.pgm", np.rint(img).astype(np.uint8),
                     maxval=255)
        mask = synth.circle_boundary_mask(img.shape, center, radius)
        io.write_pgm(out / "truth_mask.pgm",
                     mask.astype(np.uint8) * 255, maxval=255)
        extra.update(center=list(center), radius=radius)
    elif kind == "polygon":
        img, hull, mask = synth.polygon_image(cfg["size"], cfg["vertices"],
                                              seed, noise=noise)
        io.write_pgm(out / "image.pgm", np.rint(img).astype(np.uint8),
                     maxval=255)
        io.write_pgm(out / "truth_mask.pgm",
                     mask.astype(np.uint8) * 255, maxval=255)
        extra["n_vertices"] = len(hull)
    elif kind == "gap-image":
        img, mask = synth.gap_image(length=cfg["length"], gap=cfg["gap"],
                                    noise=noise, seed=seed)
        io.write_pgm(out / "image.pgm", np.rint(img).astype(np.uint8),
                     maxval=255)
        io.write_pgm(out / "truth_mask.pgm",
                     mask.astype(np.uint8) * 255, maxval=255)
        extra["n_truth"] = int(mask.sum())
    elif kind == "tube3d":
        field, truth = synth.tube3d(cfg["shape"], cfg["size"],
                                    cfg["tube_radius"], cfg["dir_noise"],
                                    seed)
        io.write_vfield(out / "field.vfield", field)
        io.write_container(out / "truth.vfield", field.shape,
                           ["tx", "ty", "tz", "dist"],
                           [truth.direction[..., 0], truth.direction[..., 1],
                            truth.direction[..., 2], truth.dist])
        extra["shape"] = cfg["shape"]
    report = _report_base(cfg, "synth", started)
    report.update(extra)
    io.write_report(out / "report.json", report)
    print(f"synth {kind}: outputs in {out}")
    return 0


def cmd_eval(cfg) -> int:
    started = time.time()
    pred, pred_max = io.read_pgm(cfg["pred"], return_maxval=True)
    truth = io.read_pgm(cfg["truth"])
    curve = evaluate_masks(pred.astype(float) / pred_max, truth,
                           rho=cfg["rho"])
    out = _out_dir(cfg)
    with open(out / "pr.csv", "w") as fh:
        fh.write("threshold,precision,recall,f\n")
        for pt in curve.points:
            fh.write(f"{pt.threshold!r},{pt.precision!r},"
                     f"{pt.recall!r},{pt.f!r}\n")
    best = curve.best
    report = _report_base(cfg, "eval", started)
    report.update(best_f=best.f, best_threshold=best.threshold,
                  best_precision=best.precision, best_recall=best.recall)
    io.write_report(out / "report.json", report)
    print(f"eval: best F={best.f:.4f} at t={best.threshold:.4f} "
          f"(P={best.precision:.4f}, R={best.recall:.4f})")
    return 0


COMMANDS = {
    "edges2d": cmd_edges2d,
    "vessels3d": cmd_vessels3d,
    "fit-points": cmd_fit_points,
    "fit-ridges": cmd_fit_ridges,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigurationError, DataFormatError, FileNotFoundError,
            IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
