"""Command-line interface: reproducible experiment runs wiring the module
operations together.

Configuration is line-based ``key = value`` (`#` comments, no sections),
merged with command-line flags (flags win). Unknown keys are rejected.
Every command writes a ``run.log`` under its output directory echoing the
fully resolved configuration. Exit codes: 0 success, 1 numeric/training
failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import inverse, scattering, sdfgeom, siren
from .errors import (
    AssemblyError,
    ConfigError,
    DegenerateInputError,
    DomainError,
    EmptyTubeError,
    FormatError,
    GeometryError,
    NumericError,
    SdfScatError,
    SolverError,
    TrainingError,
)
from .ibim import GridSdf, PointSourceIncident, direct_solve
from .sdfgeom import Rect

_USAGE_ERRORS = (
    ConfigError,
    DomainError,
    FormatError,
    GeometryError,
    DegenerateInputError,
    FileNotFoundError,
    IsADirectoryError,
)
_NUMERIC_ERRORS = (
    AssemblyError,
    EmptyTubeError,
    NumericError,
    SolverError,
    TrainingError,
)


def _parse_roi(text: str) -> Rect:
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 2:
        return Rect(parts[0], parts[1], parts[0], parts[1])
    if len(parts) == 4:
        return Rect(*parts)
    raise ConfigError(f"roi: expected 'min,max' or 'xmin,xmax,ymin,ymax', got {text!r}")


def _parse_floats(text: str):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}: {exc}") from None


def _parse_arcs(text: str):
    arcs = []
    for piece in text.split(";"):
        lohi = piece.split(",")
        if len(lohi) != 2:
            raise ConfigError(f"bad arc {piece!r}, expected 'lo,hi'")
        arcs.append((float(lohi[0]), float(lohi[1])))
    return arcs


# Option tables: name -> (type constructor, default, help). A default of
# REQUIRED means the key must come from the config file or a flag.
REQUIRED = object()

_COMMANDS = {
    "circle-sdf": {
        "radius": (float, 0.4, "circle radius"),
        "center": (_parse_floats, [0.0, 0.0], "circle center 'x,y'"),
        "n": (int, 256, "grid nodes per axis"),
        "roi": (_parse_roi, Rect(-1.0, 1.0, -1.0, 1.0), "grid extent"),
        "out": (str, ".", "output directory"),
        "output": (str, "circle.sdfgrid", "output file name"),
    },
    "mask-to-sdf": {
        "mask": (str, REQUIRED, "input PGM silhouette"),
        "threshold": (int, 128, "inside threshold (pixel >= threshold)"),
        "roi": (_parse_roi, Rect(-1.0, 1.0, -1.0, 1.0), "mask extent"),
        "out": (str, ".", "output directory"),
        "output": (str, "mask.sdfgrid", "output file name"),
    },
    "fit-sdf": {
        "sdf": (str, REQUIRED, "target SdfGrid file"),
        "iterations": (int, 5000, "fit iterations"),
        "lr": (float, 2e-4, "Adam learning rate"),
        "batch": (int, 2048, "minibatch size"),
        "seed": (int, 0, "init + minibatch seed"),
        "hidden_layers": (int, 2, "hidden-to-hidden sine layers"),
        "features": (int, 128, "hidden features"),
        "omega0": (float, 30.0, "first-layer frequency scale"),
        "out": (str, ".", "output directory"),
        "output": (str, "fit.params", "output file name"),
    },
    "synth": {
        "sdf": (str, REQUIRED, "ground-truth SdfGrid file"),
        "kappas": (_parse_floats, REQUIRED, "wave numbers 'k1,k2,...'"),
        "directions": (int, 5, "number of incident directions"),
        "sensor_mode": (str, "full", "'full' or 'arcs'"),
        "sensors": (int, 96, "number of sensors"),
        "sensor_radius": (float, 4.5, "sensor circle radius"),
        "arcs": (str, "", "arc list 'lo,hi;lo,hi' in degrees (arcs mode)"),
        "snr_db": (float, float("inf"), "measurement SNR in dB (inf = noiseless)"),
        "seed": (int, 0, "noise seed"),
        "roi": (_parse_roi, Rect(-1.1, 1.1, -1.1, 1.1), "band search extent"),
        "h": (float, 2.2 / 128, "band grid spacing"),
        "eps": (float, 2 * 2.2 / 128, "band half width"),
        "out": (str, ".", "output directory"),
        "output": (str, "meas.txt", "output file name"),
    },
    "invert": {
        "measurements": (str, REQUIRED, "measurement file"),
        "params": (str, REQUIRED, "initial siren parameter file"),
        "gt": (str, "", "optional ground-truth SdfGrid for Chamfer logging"),
        "roi": (_parse_roi, Rect(-1.1, 1.1, -1.1, 1.1), "band search extent"),
        "h": (float, 2.2 / 48, "band grid spacing"),
        "eps": (float, 2 * 2.2 / 48, "band half width"),
        "lambda1": (float, 3e-4, "Eikonal weight"),
        "lambda2": (float, 1e-7, "smoothness weight"),
        "lr": (float, 5e-5, "Adam learning rate"),
        "iterations": (int, 1500, "iterations per continuation stage"),
        "kappa_start": (float, 1.5, "first wave number"),
        "kappa_step": (float, 0.5, "continuation step"),
        "kappa_max": (float, 7.0, "last wave number"),
        "coarse_n": (int, 16, "coarse ROI sampler resolution"),
        "seed": (int, 0, "run seed"),
        "out": (str, ".", "output directory"),
    },
    "validate-direct": {
        "sdf": (str, REQUIRED, "obstacle SdfGrid file"),
        "kappa": (float, 2.0, "wave number"),
        "source": (_parse_floats, [0.0, 0.0], "interior point source 'x,y'"),
        "roi": (_parse_roi, Rect(-1.1, 1.1, -1.1, 1.1), "band search extent"),
        "h": (float, 2.2 / 128, "band grid spacing"),
        "eps": (float, 2 * 2.2 / 128, "band half width"),
        "eval_extent": (float, 5.0, "evaluation square half width"),
        "eval_n": (int, 64, "evaluation grid nodes per axis"),
        "out": (str, ".", "output directory"),
    },
    "eval-chamfer": {
        "a": (str, REQUIRED, "first SdfGrid file"),
        "b": (str, REQUIRED, "second SdfGrid file"),
        "level": (float, 0.0, "contour level"),
        "out": (str, ".", "output directory"),
    },
    "export-contour": {
        "sdf": (str, REQUIRED, "SdfGrid file"),
        "level": (float, 0.0, "contour level"),
        "out": (str, ".", "output directory"),
        "output": (str, "contour.csv", "output file name"),
    },
}


def _read_config_file(path):
    values = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {raw!r}", line=ln)
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _resolve(command: str, args: argparse.Namespace) -> dict:
    table = _COMMANDS[command]
    cfg = {k: d for k, (_, d, _) in table.items()}
    if args.config:
        for key, raw in _read_config_file(args.config).items():
            if key not in table:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            cfg[key] = table[key][0](raw)
    for key in table:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            cfg[key] = table[key][0](flag) if isinstance(flag, str) else flag
    missing = [k for k, v in cfg.items() if v is REQUIRED]
    if missing:
        raise ConfigError(f"{command}: missing required option(s): {', '.join(missing)}")
    return cfg


def _write_run_log(cfg: dict, command: str) -> None:
    os.makedirs(cfg["out"], exist_ok=True)
    with open(os.path.join(cfg["out"], "run.log"), "w") as fh:
        fh.write(f"command = {command}\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ConfigError(f"{what} not found: {path}")


def _out_path(cfg, name_key="output"):
    return os.path.join(cfg["out"], cfg[name_key])


def cmd_circle_sdf(cfg) -> int:
    grid = sdfgeom.circle_sdf(tuple(cfg["center"]), cfg["radius"], cfg["roi"],
                              cfg["n"], cfg["n"])
    _write_run_log(cfg, "circle-sdf")
    sdfgeom.save_grid(grid, _out_path(cfg))
    print(f"wrote {_out_path(cfg)}")
    return 0


def cmd_mask_to_sdf(cfg) -> int:
    _require_file(cfg["mask"], "mask file")
    mask = sdfgeom.load_pgm_mask(cfg["mask"], cfg["roi"], cfg["threshold"])
    grid = sdfgeom.fmm_signed_distance(mask)
    _write_run_log(cfg, "mask-to-sdf")
    sdfgeom.save_grid(grid, _out_path(cfg))
    print(f"wrote {_out_path(cfg)}")
    return 0


def cmd_fit_sdf(cfg) -> int:
    _require_file(cfg["sdf"], "target SDF")
    target = sdfgeom.load_grid(cfg["sdf"])
    net = siren.SirenConfig(hidden_layers=cfg["hidden_layers"],
                            hidden_features=cfg["features"],
                            omega0=cfg["omega0"])
    _write_run_log(cfg, "fit-sdf")
    params = inverse.fit_sdf(target, net, cfg["iterations"], cfg["lr"],
                             cfg["seed"], cfg["batch"])
    siren.save(params, _out_path(cfg))
    print(f"wrote {_out_path(cfg)}")
    return 0


def cmd_synth(cfg) -> int:
    _require_file(cfg["sdf"], "ground-truth SDF")
    gt = sdfgeom.load_grid(cfg["sdf"])
    arcs = _parse_arcs(cfg["arcs"]) if cfg["arcs"] else None
    sensors = scattering.make_sensors(cfg["sensor_mode"], cfg["sensors"],
                                      cfg["sensor_radius"], arcs)
    _write_run_log(cfg, "synth")
    meas = scattering.synthesize(gt, cfg["kappas"], cfg["directions"], sensors,
                                 cfg["snr_db"], cfg["seed"], cfg["roi"],
                                 cfg["h"], cfg["eps"])
    scattering.save_measurements(meas, _out_path(cfg))
    print(f"wrote {_out_path(cfg)} ({len(meas)} records)")
    return 0


def cmd_invert(cfg) -> int:
    _require_file(cfg["measurements"], "measurement file")
    _require_file(cfg["params"], "parameter file")
    if cfg["gt"]:
        _require_file(cfg["gt"], "ground-truth SDF")
    meas = scattering.load_measurements(cfg["measurements"])
    initial = siren.load(cfg["params"])
    gt_points = None
    if cfg["gt"]:
        gt_points = sdfgeom.marching_squares(sdfgeom.load_grid(cfg["gt"]), 0.0)
    icfg = inverse.InverseConfig(
        roi=cfg["roi"], h=cfg["h"], eps=cfg["eps"],
        lambda_eikonal=cfg["lambda1"], lambda_smooth=cfg["lambda2"],
        learning_rate=cfg["lr"], iterations=cfg["iterations"],
        kappa_start=cfg["kappa_start"], kappa_step=cfg["kappa_step"],
        kappa_max=cfg["kappa_max"], coarse_n=cfg["coarse_n"], seed=cfg["seed"],
    )
    _write_run_log(cfg, "invert")
    state, snapshots = inverse.invert(icfg, initial, meas, gt_points)
    inverse.write_loss_log(state.log, os.path.join(cfg["out"], "loss_log.csv"))
    for snap in snapshots:
        stem = os.path.join(cfg["out"], f"stage_{snap.kappa:g}")
        siren.save(snap.params, stem + ".params")
        sdfgeom.save_grid(snap.sdf, stem + ".sdfgrid")
        if np.isfinite(snap.chamfer):
            print(f"stage kappa={snap.kappa:g} chamfer={snap.chamfer:.6g}")
    siren.save(state.params, os.path.join(cfg["out"], "final.params"))
    print(f"wrote {cfg['out']}/loss_log.csv and {len(snapshots)} stage snapshots")
    return 0


def cmd_validate_direct(cfg) -> int:
    _require_file(cfg["sdf"], "obstacle SDF")
    grid = sdfgeom.load_grid(cfg["sdf"])
    src = GridSdf(grid)
    x0 = tuple(cfg["source"])
    incident = PointSourceIncident(x0).bind(cfg["kappa"])

    ext = cfg["eval_extent"]
    xs = np.linspace(-ext, ext, cfg["eval_n"])
    X, Y = np.meshgrid(xs, xs)
    targets = np.column_stack([X.ravel(), Y.ravel()])
    # keep exterior targets only: anything inside the obstacle or its band
    # is excluded from the comparison
    eta, _, _, _ = src.evaluate(targets[:, 0], targets[:, 1])
    inside_roi = cfg["roi"].contains(targets[:, 0], targets[:, 1])
    exterior = ~(inside_roi & (eta > -cfg["eps"]))
    targets = targets[exterior]

    _write_run_log(cfg, "validate-direct")
    u_re, u_im, _ = direct_solve(src, cfg["kappa"], incident, targets,
                                 cfg["roi"], cfg["h"], cfg["eps"])
    u = (np.asarray(u_re) + 1j * np.asarray(u_im)).ravel()
    exact = PointSourceIncident(x0).exact_scattered(targets, cfg["kappa"])
    err = sdfgeom.relative_l2(u, exact)
    print(f"relative l2 error = {err:.6g}")
    return 0


def cmd_eval_chamfer(cfg) -> int:
    _require_file(cfg["a"], "first SDF")
    _require_file(cfg["b"], "second SDF")
    pa = sdfgeom.marching_squares(sdfgeom.load_grid(cfg["a"]), cfg["level"])
    pb = sdfgeom.marching_squares(sdfgeom.load_grid(cfg["b"]), cfg["level"])
    _write_run_log(cfg, "eval-chamfer")
    print(f"chamfer = {sdfgeom.chamfer(pa, pb):.6g}")
    return 0


def cmd_export_contour(cfg) -> int:
    _require_file(cfg["sdf"], "SDF file")
    pts = sdfgeom.marching_squares(sdfgeom.load_grid(cfg["sdf"]), cfg["level"])
    _write_run_log(cfg, "export-contour")
    with open(_out_path(cfg), "w") as fh:
        fh.write("x,y\n")
        for x, y in pts:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    print(f"wrote {_out_path(cfg)} ({len(pts)} points)")
    return 0


_HANDLERS = {
    "circle-sdf": cmd_circle_sdf,
    "mask-to-sdf": cmd_mask_to_sdf,
    "fit-sdf": cmd_fit_sdf,
    "synth": cmd_synth,
    "invert": cmd_invert,
    "validate-direct": cmd_validate_direct,
    "eval-chamfer": cmd_eval_chamfer,
    "export-contour": cmd_export_contour,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfscat",
        description="Mesh-free inverse acoustic obstacle scattering toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS worker threads")
        for key, (_, default, help_text) in table.items():
            extra = "" if default is REQUIRED else f" (default: {default})"
            p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                           default=None, help=help_text + extra)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.threads is not None:
            import threadpoolctl

            threadpoolctl.threadpool_limits(int(args.threads))
        cfg = _resolve(args.command, args)
        return _HANDLERS[args.command](cfg)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SdfScatError as exc:  # any remaining toolkit failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
