"""Command-line pipeline: simulate, reconstruct, evaluate, render.

Every subcommand reads the same structured-text config (key = value, SI units)
for geometry, pulse, grid, prior, and layout parameters; command-line flags
override individual keys. Outputs are deterministic for a fixed config and
seed. Errors exit nonzero with a single ``error: ...`` line and leave no
partial outputs behind.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import io as fio
from .evaluate import componentwise_pr, pixelwise_pr, pr_area
from .saft import saft_reconstruct
from .simulate import make_phantom, multi_position_synthesize
from .solver import l1_reconstruct, mbir_reconstruct
from .stitching import joint_reconstruct, naive_stitch, volume_reconstruct_25d
from .system import assemble_model

METHODS = ("saft", "l1", "mbir2d", "mbir25d")


def _build_model(cfg):
    geom = fio.geometry_from_config(cfg)
    pulse = fio.pulse_from_config(cfg)
    grid = fio.grid_from_config(cfg)
    table, sm = assemble_model(geom, grid, pulse,
                               apodize=bool(cfg.get("apodize", True)))
    return geom, pulse, grid, table, sm


def _override(cfg, args, keys):
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val


def cmd_simulate(args):
    cfg = fio.load_config(args.config)
    _override(cfg, args, ["snr", "seed", "n_positions", "stride_cols"])
    geom, pulse, grid, table, sm = _build_model(cfg)
    layout = fio.layout_from_config(cfg)
    wide = grid.with_cols(layout.joint_width)
    phantom = make_phantom(str(cfg.get("phantom", "plates")), wide)
    snr = float(cfg.get("snr", np.inf))
    g_scale = float(cfg.get("g_scale", 1.0))
    ys = multi_position_synthesize(phantom, layout, sm.A, sm.D,
                                   g_true=np.full(sm.n_pairs, g_scale),
                                   snr=snr, seed=int(cfg.get("seed", 0)))
    ms = fio.MeasurementSet(
        data=np.vstack(ys), n_transducers=geom.n_transducers, n_pairs=sm.n_pairs,
        n_samples=pulse.n_samples, sampling_freq=pulse.sampling_freq,
        speed=pulse.speed, offsets=layout.offsets, width=layout.width)
    fio.write_measurements(args.out, ms)
    fio.write_truth(args.truth, phantom)
    print(f"wrote {args.out} ({layout.n_positions} position(s)) and {args.truth}")
    return 0


def _reconstruct_image(cfg, args, ms):
    geom, pulse, grid, table, sm = _build_model(cfg)
    layout = ms.layout
    prior = fio.prior_from_config(cfg)
    n_iters = int(cfg.get("n_iters", 30))
    seed = int(cfg.get("seed", 0))
    tol = float(cfg.get("tol", 1e-6))
    tau_tilde = int(cfg.get("tau_tilde", 3))
    sigma = float(cfg["sigma"]) if "sigma" in cfg else None
    ys = [ms.data[l].astype(float) for l in range(ms.data.shape[0])]

    if args.method == "saft":
        images = [saft_reconstruct(y, geom, grid, pulse,
                                   apodize=bool(cfg.get("apodize", True))).values
                  for y in ys]
        return naive_stitch(images, layout), None
    if args.method == "l1":
        images = [l1_reconstruct(y, sm.A, prior, grid, n_iters=n_iters, sigma=sigma,
                                 seed=seed, tol=tol) for y in ys]
        return naive_stitch(images, layout), None
    if args.method == "mbir2d":
        if bool(cfg.get("joint", True)):
            img, _, hist = joint_reconstruct(ys, sm.A, sm.D, prior, layout, grid,
                                             n_iters=n_iters, sigma=sigma, seed=seed,
                                             tol=tol, tau_tilde=tau_tilde)
            return img, hist
        images = []
        for y in ys:
            im, _, hist = mbir_reconstruct(y, sm.A, sm.D, prior, grid, n_iters=n_iters,
                                           sigma=sigma, seed=seed, tol=tol,
                                           tau_tilde=tau_tilde)
            images.append(im)
        return naive_stitch(images, layout), hist
    raise ValueError(f"unknown method {args.method!r}")


def cmd_reconstruct(args):
    if args.method not in METHODS:
        raise ValueError(f"unknown method {args.method!r}; choose from {METHODS}")
    cfg = fio.load_config(args.config)
    _override(cfg, args, ["n_iters", "seed", "sigma", "gamma", "sigma_g", "sigma_e",
                          "a", "c_min", "c_max", "tau_tilde", "joint", "apodize"])
    t0 = time.perf_counter()

    if args.method == "mbir25d":
        if not args.extra_inputs:
            raise ValueError("mbir25d needs one --input per slice (2 or more)")
        sets = [fio.read_measurements(p) for p in [args.input, *args.extra_inputs]]
        cfg.setdefault("gamma", 0.5)
        geom, pulse, grid, table, sm = _build_model(cfg)
        prior = fio.prior_from_config(cfg)
        layout = sets[0].layout
        ys_per_slice = [[ms.data[l].astype(float) for l in range(ms.data.shape[0])]
                        for ms in sets]
        vol, _, hist = volume_reconstruct_25d(
            ys_per_slice, sm.A, sm.D, prior, layout, grid,
            n_iters=int(cfg.get("n_iters", 30)),
            sigma=float(cfg["sigma"]) if "sigma" in cfg else None,
            seed=int(cfg.get("seed", 0)), tol=float(cfg.get("tol", 1e-6)))
        for z in range(vol.shape[0]):
            fio.write_image(f"{args.out}_slice{z}", vol[z], grid.pixel_pitch)
        fio.write_cost_csv(args.out + "_cost.csv", hist)
        _print_history(hist)
        print(f"wall time: {time.perf_counter() - t0:.3f} s")
        return 0

    ms = fio.read_measurements(args.input)
    image, hist = _reconstruct_image(cfg, args, ms)
    fio.write_image(args.out, image, float(cfg["pixel_pitch"]))
    if hist is not None:
        fio.write_cost_csv(args.out + "_cost.csv", hist)
        _print_history(hist)
    print(f"wall time: {time.perf_counter() - t0:.3f} s")
    return 0


def _print_history(hist):
    for i, (d, p, t) in enumerate(np.atleast_2d(hist), 1):
        print(f"iter {i:3d}  data {d:.6e}  prior {p:.6e}  total {t:.6e}")


def cmd_evaluate(args):
    recon, pitch = fio.read_image(args.recon)
    truth_img, truth_pitch, targets = fio.read_truth(args.truth)
    if args.mode == "pixel":
        if recon.shape != truth_img.shape:
            raise ValueError("reconstruction and truth dimensions differ")
        curve = pixelwise_pr(recon, truth_img > 0)
    else:
        curve = componentwise_pr(recon, [c for _, c in targets],
                                 pairing_radius=args.radius, pixel_pitch=pitch)
    fio.write_pr_csv(args.out, curve)
    print(f"pr_area = {pr_area(curve)!r}")
    return 0


def cmd_render(args):
    values, pitch = fio.read_image(args.input)
    base = args.out
    if base.endswith(".pgm"):
        base = base[:-4]
    fio.write_image(base, values, pitch)
    print(f"wrote {base}.pgm")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="echomap",
                                 description="one-sided ultrasonic imaging pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic measurements")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--truth", required=True)
    sim.add_argument("--snr", type=float)
    sim.add_argument("--seed", type=int)
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct a measurement file")
    rec.add_argument("--config", required=True)
    rec.add_argument("--input", required=True)
    rec.add_argument("--extra-inputs", nargs="*", default=[],
                     help="additional per-slice inputs for mbir25d")
    rec.add_argument("--out", required=True)
    rec.add_argument("--method", required=True)
    rec.add_argument("--iters", dest="n_iters", type=int)
    rec.add_argument("--seed", type=int)
    rec.add_argument("--sigma", type=float)
    rec.add_argument("--gamma", type=float)
    rec.add_argument("--sigma-g", dest="sigma_g", type=float)
    rec.add_argument("--sigma-e", dest="sigma_e", type=float)
    rec.add_argument("--spatial-a", dest="a", type=float)
    rec.add_argument("--c-min", dest="c_min", type=float)
    rec.add_argument("--c-max", dest="c_max", type=float)
    rec.add_argument("--tau-tilde", dest="tau_tilde", type=int)
    rec.add_argument("--apodize", dest="apodize", action=argparse.BooleanOptionalAction)
    rec.add_argument("--joint", dest="joint", action=argparse.BooleanOptionalAction)
    rec.set_defaults(func=cmd_reconstruct)

    ev = sub.add_parser("evaluate", help="precision/recall against a truth file")
    ev.add_argument("--recon", required=True, help="reconstruction .f32 file")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", required=True, help="PR curve CSV")
    ev.add_argument("--mode", choices=("pixel", "component"), default="pixel")
    ev.add_argument("--radius", type=float, default=0.10)
    ev.set_defaults(func=cmd_evaluate)

    rn = sub.add_parser("render", help="float image to 8-bit graymap")
    rn.add_argument("--input", required=True)
    rn.add_argument("--out", required=True)
    rn.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single machine-parsable line, no traceback
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
