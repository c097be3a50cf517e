"""Command line front end.

Subcommands: gen-weights, invert, exp-recovery, exp-noise, exp-uniqueness.
Every file-writing run drops a manifest JSON next to its primary output
with the fully resolved configuration, so any result can be regenerated
from its manifest alone. All randomness flows from seed flags; outputs
are byte-identical across repeat runs and across --workers settings.

Exit codes: 0 success, 2 usage error, 3 I/O or format error, 4 numerical
abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .experiments import (
    DEFAULT_THRESHOLDS,
    DEFAULT_VARIANCES,
    ExperimentConfig,
    exp_noise,
    exp_recovery,
    exp_uniqueness,
    unseen_target,
)
from .generator import (
    ConfigError,
    GeneratorSpec,
    WeightFormatError,
    build,
    fingerprint,
    load,
    save,
)
from .imagefiles import ImageFormatError, read_image, write_pgm
from .inversion import (
    MODES,
    ClippingMode,
    DivergenceError,
    InversionConfig,
    invert,
)
from .net import ImageTensor, InvalidInputError
from .streams import INIT, LATENT, derive_seed, substream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

# iterations worth a picture: the start, just after the rough shape locks
# in, and around where well-conditioned runs have converged
SNAPSHOT_ITERS = (0, 100, 20000)


def _parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, want CxHxW")
    if len(dims) != 3 or any(v <= 0 for v in dims):
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, want CxHxW")
    return dims


def _parse_ints(text: str) -> tuple[int, ...]:
    if not text.strip():
        return ()
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")


def _fmt(value: float) -> str:
    # repr gives the shortest round-trip form, so CSV bytes are stable
    return repr(float(value))


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="ascii")


def write_manifest(
    out: Path, subcommand: str, config: dict, master_seed: int, outputs: Sequence[Path]
) -> Path:
    """Drop a reproduction manifest next to the primary output.

    The config captures every flag that affects the results. Worker count
    is deliberately absent: it only changes wall time.
    """
    doc = {
        "subcommand": subcommand,
        "config": config,
        "master_seed": master_seed,
        "artifact_version": __version__,
        "outputs": [str(p) for p in outputs],
    }
    path = out.with_suffix(".manifest.json")
    _write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def _schedule_config(args: argparse.Namespace) -> dict:
    return {
        "eta0": args.eta0,
        "decay": args.decay,
        "decay_every": args.decay_every,
        "max_iters": args.max_iters,
        "loss_tol": args.loss_tol,
    }


def _inversion_config(args: argparse.Namespace, kind: str, init_seed: int) -> InversionConfig:
    return InversionConfig(
        mode=ClippingMode(kind),
        eta0=args.eta0,
        decay=args.decay,
        decay_every=args.decay_every,
        max_iters=args.max_iters,
        loss_tol=args.loss_tol,
        init_seed=init_seed,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_weights(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(
        architecture=args.arch,
        latent_dim=args.latent_dim,
        hidden_sizes=args.hidden,
        output_shape=args.out_shape,
        seed=args.seed,
    )
    net = build(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save(net, out)
    config = {
        "arch": spec.architecture,
        "latent_dim": spec.latent_dim,
        "hidden": list(spec.hidden_sizes),
        "out_shape": list(spec.output_shape),
        "seed": spec.seed,
        "out": str(out),
    }
    write_manifest(out, "gen-weights", config, spec.seed, [out])
    print(json.dumps(fingerprint(net), sort_keys=True))
    return EXIT_OK


def cmd_invert(args: argparse.Namespace) -> int:
    net = load(args.net)
    ground_truth = None
    if args.target_image is not None:
        target = read_image(args.target_image)
        target_source = {"target_image": str(args.target_image)}
    else:
        # self-test mode: push a fresh latent through the generator and
        # score the recovery against it
        ground_truth = substream(args.target_seed, 0, LATENT).uniform(
            -1.0, 1.0, net.latent_dim
        )
        y, _ = net.run(ground_truth)
        target = ImageTensor(net.output_shape, y)
        target_source = {"target_seed": args.target_seed}

    init_seed = derive_seed(args.seed, 0, INIT, MODES.index(args.mode))
    cfg = _inversion_config(args, args.mode, init_seed)
    snapshot_iters = SNAPSHOT_ITERS if args.snapshots else None
    result = invert(
        net, target, cfg, ground_truth_z=ground_truth, snapshot_iters=snapshot_iters
    )

    out = Path(args.out)
    doc = {
        "z_recovered": result.z_recovered.tolist(),
        "final_loss": result.final_loss,
        "iters_used": result.iters_used,
        "converged": result.converged,
        "z_error": result.z_error,
    }
    _write_text(out, json.dumps(doc, sort_keys=True, indent=2) + "\n")

    outputs = [out]
    if args.snapshots:
        snap_dir = Path(args.snapshots)
        snap_dir.mkdir(parents=True, exist_ok=True)
        for point in result.trajectory:
            snap = snap_dir / f"snap_{point.iteration:06d}.pgm"
            write_pgm(snap, point.image)
            outputs.append(snap)

    config = {
        "net": str(args.net),
        **target_source,
        "mode": args.mode,
        **_schedule_config(args),
        "snapshots": str(args.snapshots) if args.snapshots else None,
        "out": str(out),
    }
    write_manifest(out, "invert", config, args.seed, outputs)
    return EXIT_OK


def _experiment_setup(args: argparse.Namespace) -> ExperimentConfig:
    net = load(args.net)
    inner = _inversion_config(args, MODES[0], 0)
    return ExperimentConfig(spec=net.spec, inversion=inner, master_seed=args.seed)


def cmd_exp_recovery(args: argparse.Namespace) -> int:
    cfg = _experiment_setup(args)
    report = exp_recovery(cfg, args.trials, args.thresholds, workers=args.workers)
    lines = ["mode,eps,success_rate,n_trials"]
    for kind in cfg.modes:
        for eps, rate in zip(report.thresholds, report.success_rates[kind]):
            lines.append(f"{kind},{_fmt(eps)},{_fmt(rate)},{report.n_trials}")
    out = Path(args.out)
    _write_text(out, "\n".join(lines) + "\n")
    config = {
        "net": str(args.net),
        "trials": args.trials,
        "thresholds": list(args.thresholds),
        **_schedule_config(args),
        "out": str(out),
    }
    write_manifest(out, "exp-recovery", config, args.seed, [out])
    return EXIT_OK


def cmd_exp_noise(args: argparse.Namespace) -> int:
    cfg = _experiment_setup(args)
    report = exp_noise(cfg, args.trials, args.variances, workers=args.workers)
    lines = ["mode,variance,median_zerr,mean_zerr,q25,q75,n_trials"]
    for kind in cfg.modes:
        for k, var in enumerate(report.variances):
            lines.append(
                f"{kind},{_fmt(var)},{_fmt(report.median_zerr[kind][k])},"
                f"{_fmt(report.mean_zerr[kind][k])},{_fmt(report.q25[kind][k])},"
                f"{_fmt(report.q75[kind][k])},{report.n_trials}"
            )
    out = Path(args.out)
    _write_text(out, "\n".join(lines) + "\n")
    config = {
        "net": str(args.net),
        "trials": args.trials,
        "variances": list(args.variances),
        **_schedule_config(args),
        "out": str(out),
    }
    write_manifest(out, "exp-noise", config, args.seed, [out])
    return EXIT_OK


def cmd_exp_uniqueness(args: argparse.Namespace) -> int:
    cfg = _experiment_setup(args)
    unseen_seed = cfg.spec.seed + 1 if args.unseen_seed is None else args.unseen_seed
    target = unseen_target(cfg, unseen_seed)
    report = exp_uniqueness(
        cfg,
        args.m,
        target=target,
        baseline_pairs=args.baseline_pairs,
        workers=args.workers,
    )
    lines = ["mode,mean_pairwise,m"]
    for kind in cfg.modes:
        lines.append(f"{kind},{_fmt(report.mean_pairwise[kind])},{report.m}")
    lines.append(f"baseline,{_fmt(report.baseline)},{report.baseline_pairs}")
    out = Path(args.out)
    _write_text(out, "\n".join(lines) + "\n")
    config = {
        "net": str(args.net),
        "m": args.m,
        "baseline_pairs": args.baseline_pairs,
        "unseen_seed": unseen_seed,
        **_schedule_config(args),
        "out": str(out),
    }
    write_manifest(out, "exp-uniqueness", config, args.seed, [out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_schedule_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("optimizer schedule")
    group.add_argument("--eta0", type=float, default=1.0, help="initial step size")
    group.add_argument(
        "--decay", type=float, default=0.5, help="step attenuation per interval"
    )
    group.add_argument(
        "--decay-every", type=int, default=10000, help="iterations per attenuation"
    )
    group.add_argument("--max-iters", type=int, default=100000, help="iteration budget")
    group.add_argument(
        "--loss-tol", type=float, default=1e-12, help="stop when loss falls below"
    )


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--net", required=True, help="GENNET v1 weight file")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", required=True, help="CSV output path")
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="parallel trial processes (default: CPU count); results do not depend on it",
    )
    _add_schedule_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geninvert",
        description="Recover latent vectors from feed-forward generator images "
        "by projected gradient descent.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-weights", help="build a seeded generator and save it")
    p.add_argument("--arch", choices=("mlp", "dcgan_small"), default="mlp")
    p.add_argument("--latent-dim", type=int, default=100)
    p.add_argument(
        "--hidden",
        type=_parse_ints,
        default=(),
        help="comma-separated hidden widths (mlp only)",
    )
    p.add_argument("--out-shape", type=_parse_shape, default=(1, 16, 16), help="CxHxW")
    p.add_argument("--seed", type=int, default=0, help="weight seed")
    p.add_argument("--out", required=True, help="weight file path")
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser("invert", help="recover the latent behind one image")
    p.add_argument("--net", required=True, help="GENNET v1 weight file")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--target-image", help="PGM or JSON tensor to invert")
    source.add_argument(
        "--target-seed",
        type=int,
        help="self-test: invert the image of a seeded fresh latent",
    )
    p.add_argument("--mode", choices=MODES, default="stochastic")
    p.add_argument("--seed", type=int, default=0, help="master seed (drives the init)")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--snapshots", default=None, help="directory for progress PGMs")
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("exp-recovery", help="success rates vs error threshold")
    _add_experiment_flags(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument(
        "--thresholds",
        type=_parse_floats,
        default=DEFAULT_THRESHOLDS,
        help="comma-separated z_error thresholds",
    )
    p.set_defaults(func=cmd_exp_recovery)

    p = sub.add_parser("exp-noise", help="recovery error vs target noise")
    _add_experiment_flags(p)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument(
        "--variances",
        type=_parse_floats,
        default=DEFAULT_VARIANCES,
        help="comma-separated noise variances",
    )
    p.set_defaults(func=cmd_exp_noise)

    p = sub.add_parser("exp-uniqueness", help="spread of repeated recoveries")
    _add_experiment_flags(p)
    p.add_argument("--m", type=int, default=50, help="recoveries of the one target")
    p.add_argument("--baseline-pairs", type=int, default=100000)
    p.add_argument(
        "--unseen-seed",
        type=int,
        default=None,
        help="weight seed for the target's generator (default: net seed + 1)",
    )
    p.set_defaults(func=cmd_exp_uniqueness)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (WeightFormatError, ImageFormatError, InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
