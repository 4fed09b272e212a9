"""Benchmark harness: LR degradations, Y-channel PSNR/SSIM and the suite runner.

Scores follow the usual SR convention: BT.601 luma, a border of
``ceil(scale)`` pixels shaved off, and intensities on a ``[0, 1]`` scale.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .image import load_image, to_luma, to_uint8
from .resample import (DELTA, GaussianKernelSpec, Kernel, downscale_with_kernel, load_kernel, make_rng,
                       resize_by, sample_random_kernel)
from .trainer import ZssrConfig, run_gradual

log = logging.getLogger(__name__)

MODES = ("ideal-bicubic", "random-gaussian-kernel", "delta-aliasing", "gaussian-noise", "speckle-noise", "jpeg")
RNG_ALGORITHM = "PCG64"

GAUSSIAN_NOISE_STD = 0.05
SPECKLE_NOISE_VAR = 0.05
JPEG_QUALITY = 45


class CodecUnavailableError(RuntimeError):
    pass


@dataclass
class DegradationRecord:
    source: str
    mode: str
    seed: int
    scale: float = 2.0
    kernel_spec: GaussianKernelSpec | None = None
    noise_param: float | None = None
    jpeg_quality: int | None = None
    codec: str | None = None
    rng: str = RNG_ALGORITHM

    def params_string(self) -> str:
        """Manifest ``params`` column: ``key=value`` pairs joined by ``;``."""
        items = [("scale", self.scale)]
        if self.kernel_spec is not None:
            ks = self.kernel_spec
            items += [("lambda1", ks.lambda1), ("lambda2", ks.lambda2), ("theta", ks.theta)]
        if self.noise_param is not None:
            items.append(("sigma", self.noise_param))
        if self.jpeg_quality is not None:
            items.append(("quality", self.jpeg_quality))
        if self.codec is not None:
            items.append(("codec", self.codec))
        items.append(("rng", self.rng))
        return ";".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in items)


def jpeg_codec() -> str:
    """Identity of the JPEG codec in use; raises if none is available."""
    try:
        from PIL import Image, features
    except ImportError as exc:  # pragma: no cover
        raise CodecUnavailableError("JPEG codec unavailable: Pillow is not installed") from exc
    if not features.check("jpg"):
        raise CodecUnavailableError("JPEG codec unavailable: Pillow was built without libjpeg")
    return f"Pillow-{Image.__version__}/libjpeg-{features.version('jpg')}"


def jpeg_roundtrip(img: np.ndarray, quality: int = JPEG_QUALITY) -> np.ndarray:
    from PIL import Image

    jpeg_codec()
    q = np.clip(np.rint(np.clip(img, 0, 1) * 255), 0, 255).astype(np.uint8)
    pim = Image.fromarray(q[:, :, 0] if q.shape[2] == 1 else q)
    buf = io.BytesIO()
    pim.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as back:
        out = np.asarray(back, dtype=np.float64) / 255.0
    if out.ndim == 2:
        out = out[:, :, None]
    return out.astype(img.dtype)


def degrade(img: np.ndarray, mode: str, params: dict | None = None, seed: int = 0,
            source: str = "") -> tuple[np.ndarray, DegradationRecord]:
    """Produce an LR image from ``img`` by one of :data:`MODES`.

    ``params`` may set ``scale`` (default 2), ``sigma`` (noise std for
    gaussian-noise, noise variance for speckle-noise) and ``quality``.
    All noise modes and jpeg first downscale with antialiased bicubic.
    """
    params = dict(params or {})
    if mode not in MODES:
        raise ValueError(f"unknown degradation mode {mode!r}; expected one of {', '.join(MODES)}")
    s = float(params.pop("scale", 2.0))
    rng = make_rng(seed)
    rec = DegradationRecord(source, mode, seed, s)

    if mode == "jpeg":
        rec.codec = jpeg_codec()
    if mode == "random-gaussian-kernel":
        kernel, rec.kernel_spec = sample_random_kernel(s, rng)
        lr = downscale_with_kernel(img, kernel, s)
    elif mode == "delta-aliasing":
        lr = downscale_with_kernel(img, DELTA, s)
    else:
        lr = resize_by(img, 1.0 / s, antialias=True)

    if mode == "gaussian-noise":
        rec.noise_param = float(params.pop("sigma", GAUSSIAN_NOISE_STD))
        lr = lr + rng.normal(0.0, rec.noise_param, size=lr.shape)
    elif mode == "speckle-noise":
        # zero-mean uniform multiplicative noise with the given variance
        rec.noise_param = float(params.pop("sigma", SPECKLE_NOISE_VAR))
        half = math.sqrt(3.0 * rec.noise_param)
        lr = lr + lr * rng.uniform(-half, half, size=lr.shape)
    elif mode == "jpeg":
        rec.jpeg_quality = int(params.pop("quality", JPEG_QUALITY))
        lr = jpeg_roundtrip(np.clip(lr, 0, 1), rec.jpeg_quality)
    if params:
        raise ValueError(f"unused degradation parameters for {mode}: {sorted(params)}")
    return np.clip(lr, 0.0, 1.0).astype(img.dtype, copy=False), rec


def true_kernel(rec: DegradationRecord) -> Kernel | None:
    """The kernel that produced an LR image; None stands for antialiased bicubic."""
    if rec.mode == "random-gaussian-kernel":
        from .resample import gaussian_kernel
        return gaussian_kernel(rec.kernel_spec)
    if rec.mode == "delta-aliasing":
        return DELTA
    return None


def _shaved_luma(sr: np.ndarray, gt: np.ndarray, shave: int):
    if sr.shape[:2] != gt.shape[:2]:
        raise ValueError(f"dimension mismatch: {sr.shape} vs {gt.shape}")
    if shave < 0:
        raise ValueError("shave must be non-negative")
    h, w = gt.shape[:2]
    if h - 2 * shave < 1 or w - 2 * shave < 1:
        raise ValueError(f"shave {shave} leaves nothing of a {h}x{w} image")
    y1 = to_luma(sr.astype(np.float64))[:, :, 0]
    y2 = to_luma(gt.astype(np.float64))[:, :, 0]
    win = (slice(shave, h - shave), slice(shave, w - shave))
    return y1[win], y2[win]


def psnr_y(sr: np.ndarray, gt: np.ndarray, shave: int = 0) -> float:
    """PSNR in dB of the luma planes; ``inf`` for identical inputs."""
    a, b = _shaved_luma(sr, gt, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_y(sr: np.ndarray, gt: np.ndarray, shave: int = 0) -> float:
    """Single-scale SSIM of the luma planes over all valid 11x11 window positions."""
    a, b = _shaved_luma(sr, gt, shave)
    win = gaussian_window()
    if a.shape[0] < win.shape[0] or a.shape[1] < win.shape[1]:
        raise ValueError(f"image {a.shape} is smaller than the {win.shape} SSIM window")
    c1, c2 = 0.01 ** 2, 0.03 ** 2

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class ScoreRow:
    image: str
    method: str
    psnr_db: float
    ssim: float

    def csv_fields(self):
        return [self.image, self.method, format_score(self.psnr_db), format_score(self.ssim)]


def format_score(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


def score(sr: np.ndarray, gt: np.ndarray, shave: int, image: str = "", method: str = "") -> ScoreRow:
    return ScoreRow(image, method, psnr_y(sr, gt, shave), ssim_y(sr, gt, shave))


def oracle_combine(a: np.ndarray, b: np.ndarray, gt: np.ndarray, shave: int = 0,
                   image: str = "", method: str = "oracle") -> tuple[np.ndarray, ScoreRow]:
    """Per pixel, keep whichever of ``a`` and ``b`` has the smaller luma error (ties to ``a``)."""
    if not (a.shape == b.shape == gt.shape):
        raise ValueError(f"dimension mismatch: {a.shape}, {b.shape}, {gt.shape}")
    y_gt = to_luma(gt.astype(np.float64))
    err_a = np.abs(to_luma(a.astype(np.float64)) - y_gt)
    err_b = np.abs(to_luma(b.astype(np.float64)) - y_gt)
    out = np.where(err_b < err_a, b, a)
    return out, score(out, gt, shave, image, method)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the 8-bit levels an image file would hold."""
    return to_uint8(img).astype(np.float64) / 255.0


def crop_common(*imgs):
    h = min(i.shape[0] for i in imgs)
    w = min(i.shape[1] for i in imgs)
    return [i[:h, :w] for i in imgs]


# ---------------------------------------------------------------- suite

MANIFEST_HEADER = ["image", "gt_path", "mode", "seed", "params"]
SCORE_HEADER = ["image", "method", "psnr_db", "ssim"]

BICUBIC = "bicubic"
ZSSR_ASSUMED = "zssr-bicubic-kernel"
ZSSR_TRUE = "zssr-true-kernel"
ZSSR_NOISE = "zssr-noise-injection"
VARIANTS = (BICUBIC, ZSSR_ASSUMED, ZSSR_TRUE, ZSSR_NOISE)


@dataclass
class ManifestEntry:
    image: str
    gt_path: str
    mode: str
    seed: int
    params: dict = field(default_factory=dict)


def parse_params(text: str) -> dict:
    out = {}
    for item in filter(None, (t.strip() for t in (text or "").split(";"))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed parameter {item!r}; expected key=value")
        out[key.strip()] = value.strip()
    return out


def read_manifest(path) -> list[ManifestEntry]:
    """Read ``image,gt_path,mode,seed,params``; relative paths resolve against the manifest."""
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return entries
        if [f.strip() for f in reader.fieldnames] != MANIFEST_HEADER:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            gt = Path(row["gt_path"])
            if not gt.is_absolute():
                gt = path.parent / gt
            params = parse_params(row.get("params", ""))
            for key in ("lr_path", "kernel"):
                if key in params and not Path(params[key]).is_absolute():
                    params[key] = str(path.parent / params[key])
            entries.append(ManifestEntry(row["image"], str(gt), row["mode"], int(row["seed"] or 0), params))
    return entries


def write_manifest(entries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            w.writerow([e.image, e.gt_path, e.mode, e.seed, ";".join(f"{k}={v}" for k, v in e.params.items())])


@dataclass
class SuiteConfig:
    """Which methods to score and the ZSSR settings they share."""

    zssr: ZssrConfig = field(default_factory=ZssrConfig)
    variants: tuple = VARIANTS
    shave: int | None = None
    output_dir: str | None = None


@dataclass
class SuiteResult:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    images: dict = field(default_factory=dict)

    def mean_rows(self):
        out = []
        methods = list(dict.fromkeys(r.method for r in self.rows))
        for m in methods:
            rs = [r for r in self.rows if r.method == m]
            out.append(ScoreRow("mean", m, float(np.mean([r.psnr_db for r in rs])),
                                float(np.mean([r.ssim for r in rs]))))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for r in self.rows + self.mean_rows():
            w.writerow(r.csv_fields())
        return buf.getvalue()

    def scores(self, method: str) -> list[float]:
        return [r.psnr_db for r in self.rows if r.method == method]


def _prepare(entry: ManifestEntry, scale_default: float):
    gt = load_image(entry.gt_path, dtype=np.float64)
    params = dict(entry.params)
    lr_path = params.pop("lr_path", None)
    kernel_path = params.pop("kernel", None)
    if lr_path is not None:
        lr = load_image(lr_path, dtype=np.float64)
        s = float(params.get("scale", scale_default))
        kernel = load_kernel(kernel_path) if kernel_path else None
        rec = DegradationRecord(entry.image, entry.mode, entry.seed, s)
        return gt, lr, kernel, rec
    params.setdefault("scale", scale_default)
    lr, rec = degrade(gt, entry.mode, params, entry.seed, source=entry.image)
    kernel = load_kernel(kernel_path) if kernel_path else true_kernel(rec)
    return gt, lr, kernel, rec


def evaluate_entry(entry: ManifestEntry, cfg: SuiteConfig) -> tuple[list, dict]:
    """Score every configured variant on one manifest entry."""
    zcfg = cfg.zssr
    gt, lr, kernel, rec = _prepare(entry, zcfg.scale_factor)
    s = rec.scale
    shave = cfg.shave if cfg.shave is not None else int(math.ceil(s))
    zcfg = replace(zcfg, scale_factor=s)
    rows, images = [], {}
    for variant in cfg.variants:
        if variant == BICUBIC:
            sr = resize_by(lr, s, antialias=True, size=gt.shape[:2])
        elif variant == ZSSR_ASSUMED:
            sr, _ = run_gradual(lr, replace(zcfg, kernel=None, inject_noise=False))
        elif variant == ZSSR_TRUE:
            sr, _ = run_gradual(lr, replace(zcfg, kernel=kernel, inject_noise=False))
        elif variant == ZSSR_NOISE:
            sr, _ = run_gradual(lr, replace(zcfg, kernel=kernel, inject_noise=True))
        else:
            raise ValueError(f"unknown method variant {variant!r}")
        # score what would be written to disk
        sr = quantize(sr)
        sr_c, gt_c = crop_common(sr, gt)
        rows.append(score(sr_c, gt_c, shave, entry.image, variant))
        images[variant] = sr
    images["lr"] = lr
    return rows, images


def run_suite(manifest, cfg: SuiteConfig | None = None, out_csv=None) -> SuiteResult:
    """Evaluate every manifest entry; failures are collected, not raised.

    ``manifest`` is a path or a list of :class:`ManifestEntry`.  Rows keep
    manifest order and a ``mean`` row per method closes the table.
    """
    cfg = cfg or SuiteConfig()
    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    result = SuiteResult()
    if not entries:
        log.warning("empty manifest: nothing to evaluate")
    for entry in entries:
        try:
            rows, images = evaluate_entry(entry, cfg)
        except (OSError, ValueError, CodecUnavailableError) as exc:
            log.error("%s: %s", entry.image, exc)
            result.failures.append((entry.image, entry.gt_path, str(exc)))
            continue
        result.rows.extend(rows)
        result.images[entry.image] = images
        if cfg.output_dir:
            from .image import save_image
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            for variant, img in images.items():
                save_image(img, out / f"{entry.image}_{variant}.png")
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.write_text(result.to_csv(), encoding="utf-8")
        if result.failures:
            fail = out_csv.with_suffix(".failures.csv")
            with open(fail, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["image", "gt_path", "error"])
                w.writerows(result.failures)
    return result
