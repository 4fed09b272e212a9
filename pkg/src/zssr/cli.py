"""Command-line entry point.

Exit status: 0 on success, 1 for usage errors, 2 for runtime or data errors.
Any subcommand accepts ``--config FILE``, a ``key = value`` file whose keys
are flag names without the leading dashes; flags given on the command line
win over the file.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .image import ImageError, load_image, save_image
from .network import DivergenceError
from .resample import (GaussianKernelSpec, KernelFormatError, gaussian_kernel, load_kernel, resize_bicubic,
                       sample_random_kernel, save_kernel, scaled_size)
from .trainer import ZssrConfig, run_gradual

log = logging.getLogger("zssr")

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit with status 2; usage errors here are status 1
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _scale_above_one(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid scale {text!r}") from None
    if not (v > 1 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"scale must be > 1, got {text}")
    return v


def _positive_scale(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid scale {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"scale must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zssr", description="Zero-shot super-resolution and its evaluation tools.")
    p.add_argument("--config", metavar="FILE", help="key = value file of flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    sr = sub.add_parser("sr", help="super-resolve one image")
    sr.add_argument("input")
    sr.add_argument("--scale", type=_scale_above_one, required=True)
    sr.add_argument("--kernel", metavar="FILE", help="downscaling kernel file (default: bicubic)")
    sr.add_argument("--gradual", type=_positive_int, default=6, help="number of gradual steps")
    sr.add_argument("--no-backprojection", action="store_true")
    sr.add_argument("--inject-noise", action="store_true")
    sr.add_argument("--noise-sigma", type=float, default=None,
                    help=f"std of the injected noise (default {5 / 255:.6f}); needs --inject-noise")
    sr.add_argument("--iters", type=_positive_int, default=ZssrConfig.max_iterations,
                    help="iteration cap per gradual step")
    sr.add_argument("--crop-size", type=_positive_int, default=ZssrConfig.crop_size)
    sr.add_argument("--seed", type=int, default=0)
    sr.add_argument("--out", metavar="PATH")
    sr.add_argument("--report", metavar="PATH")

    mk = sub.add_parser("make-kernel", help="write a Gaussian kernel file")
    kind = mk.add_mutually_exclusive_group(required=True)
    kind.add_argument("--gaussian", action="store_true")
    kind.add_argument("--random", action="store_true")
    mk.add_argument("--lambda1", type=float)
    mk.add_argument("--lambda2", type=float)
    mk.add_argument("--theta", type=float)
    mk.add_argument("--scale", type=_scale_above_one, required=True)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--out", metavar="PATH", default="kernel.txt")

    dg = sub.add_parser("degrade", help="make an LR image from a GT image")
    dg.add_argument("input")
    dg.add_argument("--mode", choices=bench.MODES, required=True)
    dg.add_argument("--scale", type=_scale_above_one, default=2.0)
    dg.add_argument("--sigma", type=float, help="noise std (gaussian) or variance (speckle)")
    dg.add_argument("--quality", type=int, help="JPEG quality")
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--out", metavar="PATH", required=True)
    dg.add_argument("--kernel-out", metavar="PATH", help="also write the kernel that was used")

    ev = sub.add_parser("eval", help="score images, or run a benchmark manifest")
    ev.add_argument("--sr", metavar="PATH")
    ev.add_argument("--gt", metavar="PATH")
    ev.add_argument("--shave", type=int)
    ev.add_argument("--scale", type=_scale_above_one, default=2.0, help="sets the default shave")
    ev.add_argument("--manifest", metavar="CSV")
    ev.add_argument("--out", metavar="CSV", help="score table for --manifest")
    ev.add_argument("--variants", default=",".join(bench.VARIANTS),
                    help="comma-separated methods for --manifest")
    ev.add_argument("--gradual", type=_positive_int, default=6)
    ev.add_argument("--iters", type=_positive_int, default=ZssrConfig.max_iterations)
    ev.add_argument("--crop-size", type=_positive_int, default=ZssrConfig.crop_size)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--save-dir", metavar="DIR", help="write every SR image here")

    rs = sub.add_parser("resize", help="bicubic resize")
    rs.add_argument("input")
    rs.add_argument("--scale", type=_positive_scale)
    rs.add_argument("--size", type=_size, help="explicit HxW output size")
    rs.add_argument("--antialias", action=argparse.BooleanOptionalAction, default=True)
    rs.add_argument("--out", metavar="PATH", required=True)
    return p


def read_config(path) -> list[str]:
    """Turn a ``key = value`` file into command-line tokens."""
    tokens = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lstrip("-"), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in ("true", "yes", "on"):
            tokens.append(flag)
        elif low in ("false", "no", "off"):
            if key in ("antialias",):
                tokens.append("--no-" + key)
        else:
            tokens += [flag, value]
    return tokens


def _split_config(argv):
    """Pull ``--config FILE`` out of ``argv`` and splice its tokens in after the subcommand."""
    argv = list(argv)
    cfg = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            cfg = argv[i + 1]
            del argv[i:i + 2]
            break
        if tok.startswith("--config="):
            cfg = tok.split("=", 1)[1]
            del argv[i]
            break
    if cfg is None:
        return argv
    extra = read_config(cfg)
    cmds = {"sr", "make-kernel", "degrade", "eval", "resize"}
    for i, tok in enumerate(argv):
        if tok in cmds:
            return argv[:i + 1] + extra + argv[i + 1:]
    return argv + extra


def cmd_sr(args) -> int:
    if args.noise_sigma is not None and not args.inject_noise:
        raise UsageError("--noise-sigma requires --inject-noise")
    if args.noise_sigma is not None and args.noise_sigma < 0:
        raise UsageError("--noise-sigma must be non-negative")
    img = load_image(args.input)
    kernel = load_kernel(args.kernel) if args.kernel else None
    cfg = ZssrConfig(scale_factor=args.scale, gradual_steps=args.gradual, kernel=kernel,
                     use_backprojection=not args.no_backprojection, inject_noise=args.inject_noise,
                     noise_sigma=ZssrConfig.noise_sigma if args.noise_sigma is None else args.noise_sigma,
                     max_iterations=args.iters, crop_size=args.crop_size, seed=args.seed)
    inp = Path(args.input)
    out = Path(args.out) if args.out else inp.with_name(f"{inp.stem}_x{args.scale:g}.png")
    report_path = Path(args.report) if args.report else out.with_suffix(".report.txt")
    sr, report = run_gradual(img, cfg)
    save_image(sr, out)
    extra = {"input": str(inp), "output": str(out), "kernel_file": args.kernel or "none"}
    report_path.write_text(report.to_text(extra), encoding="utf-8")
    print(f"wrote {out} ({sr.shape[0]}x{sr.shape[1]}) and {report_path}")
    return 0


def cmd_make_kernel(args) -> int:
    if args.gaussian:
        missing = [n for n in ("lambda1", "lambda2", "theta") if getattr(args, n) is None]
        if missing:
            raise UsageError("--gaussian needs " + ", ".join("--" + m for m in missing))
        try:
            spec = GaussianKernelSpec(args.lambda1, args.lambda2, args.theta, args.scale)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        kernel = gaussian_kernel(spec)
    else:
        if any(getattr(args, n) is not None for n in ("lambda1", "lambda2", "theta")):
            raise UsageError("--random does not take --lambda1/--lambda2/--theta")
        kernel, spec = sample_random_kernel(args.scale, args.seed)
    save_kernel(kernel, args.out)
    print(f"lambda1={spec.lambda1!r} lambda2={spec.lambda2!r} theta={spec.theta!r} scale={spec.scale!r} "
          f"size={kernel.shape[0]}x{kernel.shape[1]} -> {args.out}")
    return 0


def cmd_degrade(args) -> int:
    params = {"scale": args.scale}
    if args.sigma is not None:
        params["sigma"] = args.sigma
    if args.quality is not None:
        params["quality"] = args.quality
    img = load_image(args.input, dtype=np.float64)
    try:
        lr, rec = bench.degrade(img, args.mode, params, args.seed, source=Path(args.input).name)
    except bench.CodecUnavailableError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_image(lr, args.out)
    if args.kernel_out:
        k = bench.true_kernel(rec)
        if k is None:
            raise UsageError(f"mode {args.mode} has no explicit kernel to write")
        save_kernel(k, args.kernel_out)
    print(f"{rec.source},{args.out},{rec.mode},{rec.seed},{rec.params_string()}")
    return 0


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(round(v, 6))


def cmd_eval(args) -> int:
    if args.manifest:
        if args.sr or args.gt:
            raise UsageError("--manifest cannot be combined with --sr/--gt")
        variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
        bad = [v for v in variants if v not in bench.VARIANTS]
        if bad or not variants:
            raise UsageError(f"unknown variants {bad}; choose from {','.join(bench.VARIANTS)}")
        zcfg = ZssrConfig(gradual_steps=args.gradual, max_iterations=args.iters, crop_size=args.crop_size,
                          seed=args.seed)
        cfg = bench.SuiteConfig(zcfg, variants, args.shave, args.save_dir)
        res = bench.run_suite(args.manifest, cfg, args.out)
        sys.stdout.write(res.to_csv())
        for image, path, err in res.failures:
            print(f"failed: {image} ({path}): {err}", file=sys.stderr)
        return RUNTIME_EXIT if res.failures else 0
    if not (args.sr and args.gt):
        raise UsageError("eval needs --sr and --gt, or --manifest")
    sr = load_image(args.sr, dtype=np.float64)
    gt = load_image(args.gt, dtype=np.float64)
    shave = args.shave if args.shave is not None else int(math.ceil(args.scale))
    row = bench.score(sr, gt, shave, Path(args.sr).name, "input")
    print(f"psnr={_fmt(row.psnr_db)} ssim={_fmt(row.ssim)}")
    return 0


def cmd_resize(args) -> int:
    if (args.scale is None) == (args.size is None):
        raise UsageError("resize needs exactly one of --scale and --size")
    img = load_image(args.input, dtype=np.float64)
    if args.size:
        out = resize_bicubic(img, *args.size, antialias=args.antialias)
    else:
        h, w = img.shape[:2]
        out = resize_bicubic(img, scaled_size(h, args.scale), scaled_size(w, args.scale),
                             antialias=args.antialias, scale=args.scale)
    save_image(out, args.out)
    print(f"wrote {args.out} ({out.shape[0]}x{out.shape[1]})")
    return 0


COMMANDS = {"sr": cmd_sr, "make-kernel": cmd_make_kernel, "degrade": cmd_degrade, "eval": cmd_eval,
            "resize": cmd_resize}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(_split_config(argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_EXIT
    except bench.CodecUnavailableError as exc:
        print(f"zssr: error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except (ImageError, KernelFormatError, DivergenceError, OSError, ValueError) as exc:
        print(f"zssr: error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
