"""Command-line entry point: ``lensless-inr <command> ...``.

Every command accepts ``--config FILE`` holding a JSON object whose keys
are option names (dashes or underscores). Values there override the
built-in defaults and are in turn overridden by explicit flags.

Exit codes: 0 success, 2 usage, 3 I/O, 4 architecture mismatch,
5 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import assemble_pair, read_manifest, save_pair, write_manifest
from .decoder import DecoderConfig
from .forward_model import load_psf, make_caustic_psf
from .images import load_image, save_image
from .inr import SirenConfig
from .metrics import psnr, ssim
from .optimize import ArchitectureMismatch, DivergenceError, RunOptions, embed_prior, reconstruct_untrained, reconstruct_with_prior
from .sweep import DEFAULT_CHECKPOINTS, render_table, run_sweep, write_report

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH, EXIT_DIVERGED = 0, 2, 3, 4, 5

log = logging.getLogger("lensless_inr")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _size(text) -> tuple[int, int]:
    vals = _int_list(text) if not isinstance(text, (list, tuple)) else [int(v) for v in text]
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"size must be N or H,W with positive values, got {text!r}")
    return vals[0], vals[1]


def _add_run_options(p: argparse.ArgumentParser, steps: int) -> None:
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--summary-interval", type=int, default=None, help="trace cadence (default: steps/20)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default depends on the network)")
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--loss", choices=["mse", "l1"], default="mse")
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-interval", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="zero wall-clock fields for bit-identical traces")


def _add_siren_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=208, help="hidden width n")
    p.add_argument("--hidden", type=int, default=3, help="hidden layer count")
    p.add_argument("--omega0", type=float, default=30.0)
    p.add_argument("--output-activation", choices=["linear", "sigmoid"], default="linear")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lensless-inr", description="Untrained coordinate-network reconstruction for lensless cameras.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psf", help="synthesize a caustic PSF image")
    p.add_argument("--size", type=_size, default=(256, 256))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="simulate a noisy lensless measurement")
    p.add_argument("--image", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=None)
    p.add_argument("--name", default="sample")
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=16)
    p.add_argument("--out", default=".")

    p = sub.add_parser("reconstruct", help="reconstruct a scene from a measurement")
    p.add_argument("--method", choices=["inr", "mdd"], default="inr")
    p.add_argument("--measurement", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--truth", default=None, help="ground truth for PSNR/SSIM in the trace")
    p.add_argument("--prior", default=None, help="checkpoint to start from")
    p.add_argument("--size", type=_size, default=None)
    p.add_argument("--k", type=int, default=148, help="decoder channel count")
    _add_siren_options(p)
    _add_run_options(p, 5000)
    p.add_argument("--out", default="run")

    p = sub.add_parser("embed", help="fit a network to a prior image")
    p.add_argument("--image", required=True)
    p.add_argument("--size", type=_size, default=None)
    _add_siren_options(p)
    _add_run_options(p, 2000)
    p.add_argument("--out", default="prior")

    p = sub.add_parser("sweep", help="SSIM against network size")
    p.add_argument("--measurement", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--size", type=_size, default=None)
    p.add_argument("--widths", type=_int_list, default=[208, 128, 64, 48, 32, 24])
    p.add_argument("--ks", type=_int_list, default=[148, 96, 48, 32, 24, 16])
    p.add_argument("--hidden", type=int, default=3)
    p.add_argument("--checkpoints", type=_int_list, default=list(DEFAULT_CHECKPOINTS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", default="sweep")

    p = sub.add_parser("metrics", help="PSNR | SSIM between two images")
    p.add_argument("image")
    p.add_argument("reference")

    for name, sp in sub.choices.items():
        sp.add_argument("--config", default=None, help="JSON file of option defaults")
    return parser


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with the config file's values installed as defaults."""
    path = _config_path(argv)
    command = next((t for t in argv if t in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        values = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in values.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"config {path}: unknown option {key!r}")
        action = known[dest]
        try:
            if action.type is _size:
                val = _size(val)
            elif action.type is _int_list and isinstance(val, list):
                val = [int(v) for v in val]
            elif action.type is not None:
                val = action.type(val)
        except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config {path}: bad value for {key!r}: {exc}") from None
        if action.choices is not None and val not in action.choices:
            raise UsageError(f"config {path}: {key!r} must be one of {sorted(action.choices)}")
        defaults[dest] = val
        # an option supplied by the file no longer needs a flag
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _summary_interval(args) -> int:
    if args.summary_interval is not None:
        return args.summary_interval
    return max(1, args.steps // 20) if args.steps else 1


def _run_options(args, checkpoint_dir=None) -> RunOptions:
    return RunOptions(
        steps=args.steps,
        summary_interval=_summary_interval(args),
        loss=args.loss,
        weight_decay=args.weight_decay,
        seed=args.seed,
        lr=args.lr,
        optimizer=args.optimizer,
        checkpoint_interval=args.checkpoint_interval,
        checkpoint_dir=checkpoint_dir,
        deterministic=args.deterministic,
    )


def _siren(args) -> SirenConfig:
    return SirenConfig(args.width, args.hidden, args.omega0, args.omega0, args.output_activation)


def _effective(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    return json.loads(json.dumps(d, default=list))


def cmd_psf(args) -> int:
    psf = make_caustic_psf(args.size, seed=args.seed)
    k = psf.kernel
    save_image(k / k.max(), args.out, bit_depth=16)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sample = assemble_pair(args.image, args.psf, args.sigma, args.seed, args.size)
    out = Path(args.out)
    entry = save_pair(sample, out, args.name, args.bit_depth)
    manifest = out / "manifest.json"
    entries = read_manifest(manifest) if manifest.exists() else []
    entries = [e for e in entries if e.get("name") != args.name] + [entry]
    write_manifest(manifest, entries)
    print(f"wrote {out / 'y.png'} (sigma={args.sigma}, seed={args.seed})")
    return EXIT_OK


def _finish_run(args, out: Path, image, record, config) -> int:
    save_image(image, out / "x_hat.png", bit_depth=8)
    record.write_trace_csv(out / "trace.csv")
    save_checkpoint(out / "checkpoint.bin", config, record.params, args.seed)
    record.checkpoint = "checkpoint.bin"
    doc = record.to_dict() | {"cli": _effective(args)}
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    last = record.rows[-1] if record.rows else None
    if last is not None:
        msg = f"step {last.step} loss {last.loss:.6g}"
        if last.psnr_db is not None:
            msg += f"  {last.psnr_db:.2f} | {last.ssim:.4f}" if last.ssim is not None else f"  {last.psnr_db:.2f} dB"
        print(msg)
    print(f"{record.arch}: {record.param_count} parameters, artifacts in {out}")
    if record.status == "diverged":
        print(f"error: {record.message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    y = load_image(args.measurement, args.size)
    psf = load_psf(args.psf, y.shape[:2])
    truth = load_image(args.truth, y.shape[:2]) if args.truth else None
    if args.method == "inr":
        net = _siren(args)
    else:
        net = DecoderConfig(args.k, y.shape[0], y.shape[1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = _run_options(args, str(out) if args.checkpoint_interval else None)
    if args.prior:
        ck = load_checkpoint(args.prior)
        if ck.config != net:
            raise ArchitectureMismatch(f"prior {args.prior} holds {ck.arch} {ck.config.to_dict()}, requested {net.to_dict()}")
        image, record = reconstruct_with_prior(y, psf, ck.params, net, opts, truth)
    else:
        image, record = reconstruct_untrained(y, psf, net, opts, truth)
    return _finish_run(args, out, image, record, net)


def cmd_embed(args) -> int:
    x = np.clip(load_image(args.image, args.size), 0, 1)
    net = _siren(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = _run_options(args, str(out) if args.checkpoint_interval else None)
    params, record = embed_prior(x, net, opts)
    from .inr import render

    image = np.clip(render(params, net, *x.shape[:2]), 0, 1)
    code = _finish_run(args, out, image, record, net)
    fidelity = {"psnr_db": psnr(image, x), "ssim": ssim(image, x) if min(x.shape[:2]) >= 11 else None}
    (out / "embed.json").write_text(json.dumps(fidelity, indent=2) + "\n")
    print(f"embedding fidelity: {fidelity['psnr_db']:.2f} dB")
    return code


def cmd_sweep(args) -> int:
    y = load_image(args.measurement, args.size)
    psf = load_psf(args.psf, y.shape[:2])
    truth = load_image(args.truth, y.shape[:2])
    sizes = {}
    if args.widths:
        sizes["inr"] = args.widths
    if args.ks:
        sizes["mdd"] = args.ks
    if not sizes:
        raise UsageError("nothing to sweep: give --widths and/or --ks")
    cells = run_sweep(y, psf, truth, sizes, args.checkpoints, args.hidden, args.seed, jobs=args.jobs, deterministic=args.deterministic)
    write_report(cells, args.out)
    (Path(args.out) / "config.json").write_text(json.dumps(_effective(args), indent=2, sort_keys=True) + "\n")
    sys.stdout.write(render_table(cells))
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = load_image(args.image)
    b = load_image(args.reference)
    if a.shape != b.shape:
        raise UsageError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    s = ssim(a, b) if min(a.shape[:2]) >= 11 else float("nan")
    print(f"{psnr(a, b):.2f} | {s:.4f}")
    return EXIT_OK


COMMANDS = {
    "psf": cmd_psf,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "embed": cmd_embed,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArchitectureMismatch, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (DivergenceError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
