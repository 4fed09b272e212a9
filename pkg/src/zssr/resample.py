"""Resampling: MATLAB-style bicubic resize, kernel downscaling and Gaussian PSFs.

Coordinates follow the half-pixel-center convention throughout: output
sample ``i`` of a resize by ``scale`` sits at input position
``(i + 0.5) / scale - 0.5``.  Samples outside the image replicate the edge.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GAUSSIAN_FLOOR = 0.05
GAUSSIAN_RADIUS_SIGMAS = 3.0


class KernelFormatError(ValueError):
    """Malformed kernel file."""


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def scaled_size(size: int, factor: float) -> int:
    """``round(size * factor)`` with ties away from zero."""
    return round_half_away(size * factor)


def cubic_weight(x):
    """Keys cubic convolution kernel with ``a = -0.5``."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = 1.5 * ax3 - 2.5 * ax2 + 1.0
    outer = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    w = np.where(ax <= 1.0, inner, np.where(ax <= 2.0, outer, 0.0))
    return w if w.ndim else float(w)


@functools.lru_cache(maxsize=512)
def resize_weights(in_len: int, out_len: int, scale: float | None = None, antialias: bool = True) -> np.ndarray:
    """Dense ``(out_len, in_len)`` interpolation matrix for one axis.

    ``scale`` defaults to ``out_len / in_len``.  When shrinking with
    ``antialias`` the cubic is stretched by ``1 / scale``.  Every row sums to 1.
    """
    if scale is None:
        scale = out_len / in_len
    if antialias and scale < 1.0:
        width = 4.0 / scale

        def kernel(d):
            return scale * cubic_weight(scale * d)
    else:
        width = 4.0
        kernel = cubic_weight

    centers = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(centers - width / 2.0)
    ntaps = int(math.ceil(width)) + 2
    taps = left[:, None] + np.arange(ntaps)[None, :]
    w = kernel(centers[:, None] - taps)
    w = w / w.sum(axis=1, keepdims=True)
    idx = np.clip(taps, 0, in_len - 1).astype(np.intp)

    mat = np.zeros((out_len, in_len))
    rows = np.broadcast_to(np.arange(out_len)[:, None], idx.shape)
    np.add.at(mat, (rows, idx), w)
    mat.setflags(write=False)
    return mat


def _pair(v):
    if v is None or np.isscalar(v):
        return (None if v is None else float(v),) * 2
    return tuple(float(x) for x in v)


def resize_bicubic(img: np.ndarray, out_h: int, out_w: int, antialias: bool = True,
                   scale=None, clamp: bool = True) -> np.ndarray:
    """Separable bicubic resize of an ``(H, W, C)`` image.

    ``scale`` (scalar or ``(sy, sx)``) overrides the coordinate mapping,
    which otherwise uses the ratio of output to input size.  ``clamp=False``
    keeps signed data such as residuals intact.
    """
    h, w = img.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    sy, sx = _pair(scale)
    out = img
    if out_h != h or (sy is not None and sy != 1.0):
        mh = resize_weights(h, out_h, sy, antialias).astype(img.dtype, copy=False)
        out = (mh @ out.reshape(h, -1)).reshape(out_h, w, -1)
    if out_w != w or (sx is not None and sx != 1.0):
        mw = resize_weights(w, out_w, sx, antialias).astype(img.dtype, copy=False)
        out = np.tensordot(mw, out, axes=([1], [1])).transpose(1, 0, 2)
    if out is img:
        return img.copy()
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return np.ascontiguousarray(out)


def resize_by(img: np.ndarray, factor: float, antialias: bool = True, clamp: bool = True,
              size=None) -> np.ndarray:
    """Resize by ``factor``; the output defaults to ``round(size * factor)``."""
    h, w = img.shape[:2]
    if size is None:
        size = (scaled_size(h, factor), scaled_size(w, factor))
    return resize_bicubic(img, size[0], size[1], antialias=antialias, scale=factor, clamp=clamp)


@dataclass(frozen=True, eq=False)
class Kernel:
    """A normalized 2-D downscaling kernel anchored at ``center`` (row, col)."""

    taps: np.ndarray
    center: tuple

    def __init__(self, taps, center=None):
        taps = np.array(taps, dtype=np.float64)
        if taps.ndim == 1:
            taps = taps[None, :]
        if taps.ndim != 2 or taps.size == 0:
            raise ValueError(f"kernel taps must be a non-empty 2-D grid, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps must be finite")
        total = taps.sum()
        if abs(total) < 1e-12:
            raise ValueError("kernel taps sum to zero")
        taps = taps / total
        taps.setflags(write=False)
        if center is None:
            center = ((taps.shape[0] - 1) / 2.0, (taps.shape[1] - 1) / 2.0)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "center", (float(center[0]), float(center[1])))

    @property
    def shape(self):
        return self.taps.shape

    def __eq__(self, other):
        return (isinstance(other, Kernel) and self.center == other.center
                and self.taps.shape == other.taps.shape and np.array_equal(self.taps, other.taps))

    def __repr__(self):
        return f"Kernel(shape={self.taps.shape}, center={self.center})"


DELTA = Kernel([[1.0]])


def kernel_sample_indices(in_len: int, out_len: int, s: float, ksize: int, center: float) -> np.ndarray:
    """Input index of every kernel tap for every output sample, edge-clamped.

    The kernel center is placed on the half-pixel-center location
    ``(i + 0.5) * s - 0.5``; when this puts taps between pixels the whole
    footprint snaps to the nearest grid position (ties toward +inf).
    """
    pos = (np.arange(out_len, dtype=np.float64) + 0.5) * s - 0.5
    base = np.floor(pos - center + 0.5).astype(np.intp)
    idx = base[:, None] + np.arange(ksize)[None, :]
    return np.clip(idx, 0, in_len - 1)


def downscale_with_kernel(img: np.ndarray, k: Kernel, s: float, size=None) -> np.ndarray:
    """Blur ``img`` with ``k`` (edge replicated) and subsample by ``s``.

    Output size is ``round(in / s)`` per axis unless ``size`` is given.
    """
    if s <= 1.0:
        raise ValueError(f"downscale factor must exceed 1, got {s}")
    h, w = img.shape[:2]
    kh, kw = k.shape
    if kh > 2 * h + 1 or kw > 2 * w + 1:
        raise ValueError(f"kernel {kh}x{kw} is larger than the edge-padded {h}x{w} image")
    out_h, out_w = size if size is not None else (scaled_size(h, 1.0 / s), scaled_size(w, 1.0 / s))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"downscaling {h}x{w} by {s} leaves an empty image")
    ri = kernel_sample_indices(h, out_h, s, kh, k.center[0])
    ci = kernel_sample_indices(w, out_w, s, kw, k.center[1])
    taps = k.taps.astype(img.dtype, copy=False)
    out = np.zeros((out_h, out_w, img.shape[2]), dtype=img.dtype)
    for a in range(kh):
        rows = img[ri[:, a]]
        for b in range(kw):
            if taps[a, b] != 0.0:
                out += taps[a, b] * rows[:, ci[:, b]]
    return out


def downscale(img: np.ndarray, kernel: Kernel | None, s: float, size=None) -> np.ndarray:
    """Downscale by ``s`` with ``kernel``, or with antialiased bicubic when ``kernel`` is None."""
    if kernel is None:
        return resize_by(img, 1.0 / s, antialias=True, clamp=False, size=size)
    return downscale_with_kernel(img, kernel, s, size=size)


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Covariance ``U diag(lambda1, lambda2) U^T`` with ``U`` a rotation by ``theta``."""

    lambda1: float
    lambda2: float
    theta: float
    scale: float

    def __post_init__(self):
        limit = self.scale ** 2
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (0.0 <= v <= limit):
                raise ValueError(f"{name}={v} outside [0, scale^2={limit}]")
        if not (0.0 <= self.theta < math.pi):
            raise ValueError(f"theta={self.theta} outside [0, pi)")

    def covariance(self) -> np.ndarray:
        l1 = max(self.lambda1, GAUSSIAN_FLOOR)
        l2 = max(self.lambda2, GAUSSIAN_FLOOR)
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = np.array([[c, -s], [s, c]])
        return u @ np.diag([l1, l2]) @ u.T


def gaussian_kernel(spec: GaussianKernelSpec) -> Kernel:
    """Sampled anisotropic Gaussian, truncated at three standard deviations.

    Offsets are ``(row, col)`` from the central tap, so with ``theta = 0``
    ``lambda1`` is the variance down the rows and ``lambda2`` across columns.
    """
    cov = spec.covariance()
    lam_max = max(spec.lambda1, spec.lambda2, GAUSSIAN_FLOOR)
    radius = int(math.ceil(GAUSSIAN_RADIUS_SIGMAS * math.sqrt(lam_max)))
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    d = np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1)
    prec = np.linalg.inv(cov)
    q = np.einsum("...i,ij,...j->...", d, prec, d)
    return Kernel(np.exp(-0.5 * q), center=(radius, radius))


def make_rng(seed) -> np.random.Generator:
    """Seeded PCG64 generator; the algorithm is fixed so datasets regenerate exactly."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_random_kernel(s: float, seed) -> tuple[Kernel, GaussianKernelSpec]:
    """Draw ``lambda1, lambda2 ~ U[0, s^2]`` and ``theta ~ U[0, pi)``."""
    if s <= 1.0:
        raise ValueError(f"scale must exceed 1, got {s}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    l1, l2 = rng.uniform(0.0, s * s, size=2)
    theta = rng.uniform(0.0, math.pi)
    spec = GaussianKernelSpec(float(l1), float(l2), float(theta), float(s))
    return gaussian_kernel(spec), spec


def parse_kernel(text: str, source: str = "<kernel>") -> Kernel:
    """Parse the plain-text kernel format (see :func:`save_kernel`)."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append((lineno, line))
    if not lines:
        raise KernelFormatError(f"{source}: empty kernel file")

    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise KernelFormatError(f"{source}:{lineno}: expected 'KH KW', got {header!r}")
    try:
        kh, kw = int(parts[0]), int(parts[1])
    except ValueError:
        raise KernelFormatError(f"{source}:{lineno}: kernel size must be integers, got {header!r}") from None
    if kh < 1 or kw < 1:
        raise KernelFormatError(f"{source}:{lineno}: kernel size must be positive, got {kh}x{kw}")

    body = lines[1:]
    if len(body) < kh:
        raise KernelFormatError(f"{source}: expected {kh} tap rows, found {len(body)}")
    taps = np.empty((kh, kw))
    for r, (lineno, line) in enumerate(body[:kh]):
        tokens = line.split()
        if len(tokens) != kw:
            raise KernelFormatError(f"{source}:{lineno}: expected {kw} taps, found {len(tokens)}")
        try:
            taps[r] = [float(t) for t in tokens]
        except ValueError:
            raise KernelFormatError(f"{source}:{lineno}: non-numeric tap in {line!r}") from None
    if not np.all(np.isfinite(taps)):
        raise KernelFormatError(f"{source}: non-finite taps")

    center = None
    rest = body[kh:]
    if rest:
        lineno, line = rest[0]
        tokens = line.split()
        if len(rest) > 1 or len(tokens) != 3 or tokens[0] != "CENTER":
            raise KernelFormatError(f"{source}:{lineno}: unexpected content {line!r}")
        try:
            center = (float(tokens[1]), float(tokens[2]))
        except ValueError:
            raise KernelFormatError(f"{source}:{lineno}: non-numeric center in {line!r}") from None

    total = taps.sum()
    if abs(total) < 1e-12:
        raise KernelFormatError(f"{source}: kernel taps sum to zero")
    if abs(total - 1.0) > 1e-3:
        warnings.warn(f"{source}: kernel taps summed to {float(total):g}; normalized to 1", stacklevel=3)
    return Kernel(taps, center)


def load_kernel(path) -> Kernel:
    path = Path(path)
    return parse_kernel(path.read_text(encoding="utf-8"), source=str(path))


def format_kernel(k: Kernel) -> str:
    kh, kw = k.shape
    out = [f"{kh} {kw}"]
    out.extend(" ".join(repr(float(v)) for v in row) for row in k.taps)
    if k.center != ((kh - 1) / 2.0, (kw - 1) / 2.0):
        out.append(f"CENTER {k.center[0]!r} {k.center[1]!r}")
    return "\n".join(out) + "\n"


def save_kernel(k: Kernel, path) -> None:
    """Write ``KH KW``, then ``KH`` rows of taps, then an optional ``CENTER r c`` line."""
    Path(path).write_text(format_kernel(k), encoding="utf-8", newline="\n")
