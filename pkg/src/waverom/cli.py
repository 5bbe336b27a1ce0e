"""Command-line surface stringing the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import evaluation, formats, training
from .errors import NumericalError, ValidationError, WaveromError
from .fdtd import SimulationConfig, run_simulation
from .model import ArchitectureSpec, ParamPoint, crop_dims, reconstruct
from .training import DatasetManifest, TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _load_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{what} file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{what} file {path} is not valid JSON: {e}")


def _sim_config(path) -> SimulationConfig:
    return SimulationConfig.from_dict(_load_json(path, "simulation config"))


def build_parser() -> _Parser:
    p = _Parser(prog="waverom", description="Reduced-order surrogate for 3D wave fields")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one FDTD simulation, write EVF frames")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("dataset", help="run a parameter grid of simulations")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train-ae", help="train the autoencoder")
    s.add_argument("--manifest", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("encode", help="precompute latent codes for a dataset")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train-proj", help="train the projection approximator")
    s.add_argument("--latents", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("reconstruct", help="reconstruct a field volume at (r, n, t)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("-r", type=float, required=True)
    s.add_argument("-n", type=float, required=True)
    s.add_argument("-t", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--denormalize", action="store_true",
                   help="scale output back to raw field units")

    s = sub.add_parser("evaluate", help="per-simulation reconstruction errors")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--truth", required=True, help="manifest of ground-truth sims")
    s.add_argument("--mode", choices=["interp", "extrap"], required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("latent-trace", help="one latent component over time")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--sim", required=True, help="directory of EVF frames")
    s.add_argument("--component", type=int, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("timing", help="FDTD vs surrogate per-frame wall time")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--config", required=True)

    s = sub.add_parser("export-slice", help="export a mid-plane as a PGM image")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--axis", choices=["x", "y", "z"], default="z")
    s.add_argument("--index", default="mid")
    s.add_argument("--out", required=True)

    return p


def _cmd_simulate(args):
    cfg = _sim_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    volumes = run_simulation(cfg)
    for k, vol in enumerate(volumes):
        formats.write_volume(vol, os.path.join(args.out, f"frame_{k:04d}.evf"))
    print(f"wrote {len(volumes)} volumes to {args.out}")


def _cmd_dataset(args):
    cfg = _sim_config(args.config)
    grid = _load_json(args.grid, "parameter grid")
    if "points" in grid:
        points = [tuple(p) for p in grid["points"]]
    elif "r" in grid and "n" in grid:
        points = [(r, n) for r in grid["r"] for n in grid["n"]]
    else:
        raise ValidationError("grid file needs either 'points' or both 'r' and 'n' lists")
    manifest = training.build_dataset(points, cfg, args.out)
    print(f"dataset: {len(manifest.entries)} simulations, "
          f"{manifest.frame_count()} volumes, manifest at {args.out}/manifest.json")


def _arch_from_spec(spec_dict, manifest) -> ArchitectureSpec:
    if "input_dims" not in spec_dict:
        spec_dict = {**spec_dict, "input_dims": list(crop_dims(manifest.grid_dims))}
    return ArchitectureSpec.from_dict(spec_dict)


def _cmd_train_ae(args):
    manifest = DatasetManifest.load(args.manifest)
    arch = _arch_from_spec(_load_json(args.spec, "architecture spec"), manifest)
    cfg = TrainConfig.from_dict(_load_json(args.train, "training config"))
    params, norm, losses = training.train_autoencoder(manifest, arch, cfg)
    training.save_checkpoint(params, norm, args.out)
    print(f"autoencoder: initial L1 {losses[0]:.5f}, final L1 {losses[-1]:.5f}; "
          f"checkpoint at {args.out}")


def _cmd_encode(args):
    params, norm = training.load_checkpoint(args.ckpt)
    manifest = DatasetManifest.load(args.manifest)
    codes, points, labels = training.encode_dataset(manifest, params, norm)
    training.save_latents(args.out, codes, points, labels)
    print(f"encoded {codes.shape[0]} volumes to latent size {codes.shape[1]}")


def _cmd_train_proj(args):
    params, norm = training.load_checkpoint(args.ckpt)
    codes, points, _ = training.load_latents(args.latents)
    cfg = TrainConfig.from_dict(_load_json(args.train, "training config"))
    params, losses = training.train_approximator(codes, points, params, cfg)
    training.save_checkpoint(params, norm, args.out)
    print(f"approximator: initial loss {losses[0]:.5f}, final loss {losses[-1]:.5f}; "
          f"checkpoint at {args.out}")


def _cmd_reconstruct(args):
    params, norm = training.load_checkpoint(args.ckpt)
    vol = reconstruct(params, ParamPoint(args.r, args.n, args.t), norm)
    if args.denormalize:
        vol.data = vol.data * norm.field_scale
    formats.write_volume(vol, args.out)
    print(f"wrote {vol.data.shape} volume to {args.out}")


def _cmd_evaluate(args):
    params, norm = training.load_checkpoint(args.ckpt)
    manifest = DatasetManifest.load(args.truth)
    if args.mode == "interp":
        report = evaluation.evaluate_interpolation(params, norm, manifest)
    else:
        report = evaluation.evaluate_extrapolation(params, norm, manifest)
    report.write_csv(args.out)
    print(report.summary())


def _cmd_latent_trace(args):
    params, norm = training.load_checkpoint(args.ckpt)
    paths = sorted(glob.glob(os.path.join(args.sim, "*.evf")))
    if not paths:
        raise ValidationError(f"no EVF files in {args.sim}")
    volumes = [formats.read_volume(p) for p in paths]
    series = evaluation.latent_trace(params, norm, volumes, args.component)
    series.write_csv(args.out)
    print(f"wrote {len(series.values)}-frame trace of component {args.component}")


def _cmd_timing(args):
    params, norm = training.load_checkpoint(args.ckpt)
    cfg = _sim_config(args.config)
    mid = {"r": np.mean(norm.param_ranges["r"]), "n": np.mean(norm.param_ranges["n"])}
    point = ParamPoint(mid["r"], mid["n"], cfg.duration)
    report = evaluation.timing_comparison(params, norm, cfg, point)
    print(f"fdtd     : {report['fdtd_seconds_per_frame']:.4f} s/frame")
    print(f"surrogate: {report['surrogate_seconds_per_frame']:.4f} s/frame")
    print(f"ratio    : {report['ratio']:.2f}x")


def _cmd_export_slice(args):
    vol = formats.read_volume(args.infile)
    formats.export_slice(vol, args.axis, args.index, args.out)
    print(f"wrote slice to {args.out}")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "dataset": _cmd_dataset,
    "train-ae": _cmd_train_ae,
    "encode": _cmd_encode,
    "train-proj": _cmd_train_proj,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "latent-trace": _cmd_latent_trace,
    "timing": _cmd_timing,
    "export-slice": _cmd_export_slice,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as e:  # --help and friends
        return 0 if e.code in (0, None) else 1
    try:
        _COMMANDS[args.command](args)
        return 0
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except WaveromError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
