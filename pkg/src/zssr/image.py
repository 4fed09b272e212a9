"""Image arrays, PNG I/O, luma conversion and the eight dihedral transforms.

Images are plain numpy arrays of shape ``(H, W, C)`` with ``C`` in ``{1, 3}``
and samples in ``[0, 1]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError


class ImageError(ValueError):
    """Raised for unreadable or unsupported image files and malformed arrays."""


def as_image(arr, dtype=np.float32) -> np.ndarray:
    """Coerce ``arr`` to an ``(H, W, C)`` float array, adding a channel axis to 2-D input."""
    img = np.asarray(arr, dtype=dtype)
    if img.ndim == 2:
        img = img[:, :, None]
    check_image(img)
    return img


def check_image(img: np.ndarray) -> None:
    if img.ndim != 3:
        raise ImageError(f"expected an (H, W, C) array, got shape {img.shape}")
    h, w, c = img.shape
    if h < 1 or w < 1:
        raise ImageError(f"empty image of shape {img.shape}")
    if c not in (1, 3):
        raise ImageError(f"images must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(img)):
        raise ImageError("image contains non-finite samples")


def load_image(path, dtype=np.float32) -> np.ndarray:
    """Read a PNG (or other lossless Pillow format) into ``[0, 1]`` floats.

    Gray, gray+alpha, RGB and RGBA files are accepted; alpha is dropped.
    8- and 16-bit samples are divided by ``2**depth - 1``.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as pim:
            pim.load()
            mode = pim.mode
            if mode in ("1", "L", "P", "LA", "RGB", "RGBA"):
                if mode == "P":
                    pim = pim.convert("RGBA" if "transparency" in pim.info else "RGB")
                elif mode == "1":
                    pim = pim.convert("L")
                if pim.mode == "LA":
                    pim = pim.convert("L")
                elif pim.mode == "RGBA":
                    pim = pim.convert("RGB")
                data = np.asarray(pim, dtype=np.float64) / 255.0
            elif mode in ("I;16", "I;16B", "I;16L", "I"):
                raw = np.asarray(pim)
                if raw.max(initial=0) > 65535 or raw.min(initial=0) < 0:
                    raise ImageError(f"{path}: unsupported bit depth for mode {mode}")
                data = raw.astype(np.float64) / 65535.0
            else:
                raise ImageError(f"{path}: unsupported image mode {mode!r}")
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageError(f"{path}: unreadable image ({exc})") from exc
    return as_image(data, dtype=dtype)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to ``[0, 1]`` and quantize to the nearest 8-bit level."""
    return np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an 8-bit PNG. Samples are clamped to ``[0, 1]`` first."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    check_image(img)
    q = to_uint8(img)
    pim = PILImage.fromarray(q[:, :, 0] if q.shape[2] == 1 else q, mode="L" if q.shape[2] == 1 else "RGB")
    try:
        pim.save(Path(path), format="PNG")
    except OSError as exc:
        raise ImageError(f"{path}: cannot write image ({exc})") from exc


# BT.601, digital-video range
_LUMA_WEIGHTS = np.array([65.481, 128.553, 24.966]) / 255.0
_LUMA_OFFSET = 16.0 / 255.0


def to_luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma in the ``[16/255, 235/255]`` convention; gray input passes through."""
    if img.shape[2] == 1:
        return img
    y = img.astype(np.float64) @ _LUMA_WEIGHTS + _LUMA_OFFSET
    return y[:, :, None].astype(img.dtype, copy=False)


@dataclass(frozen=True)
class Geometry:
    """An element of the dihedral group D4 acting on images.

    The transform mirrors left-right first (if ``mirrored``) and then rotates
    counter-clockwise by ``rotation`` degrees.
    """

    rotation: int = 0
    mirrored: bool = False

    def __post_init__(self):
        if self.rotation not in (0, 90, 180, 270):
            raise ValueError(f"rotation must be a multiple of 90 in [0, 270], got {self.rotation}")

    def inverse(self) -> "Geometry":
        if self.mirrored:
            # a mirror composed with any rotation is an involution
            return self
        return Geometry((360 - self.rotation) % 360, False)

    def compose(self, other: "Geometry") -> "Geometry":
        """Geometry equivalent to applying ``other`` first, then ``self``."""
        rot_other = other.rotation if not self.mirrored else (360 - other.rotation) % 360
        return Geometry((self.rotation + rot_other) % 360, self.mirrored != other.mirrored)

    @property
    def swaps_axes(self) -> bool:
        return self.rotation in (90, 270)


ALL_GEOMETRIES = tuple(Geometry(r, m) for m, r in itertools.product((False, True), (0, 90, 180, 270)))
IDENTITY = ALL_GEOMETRIES[0]


def apply_geometry(img: np.ndarray, g: Geometry) -> np.ndarray:
    """Permute pixels of ``img`` (or any array with spatial axes 0 and 1) by ``g``."""
    out = img[:, ::-1] if g.mirrored else img
    return np.rot90(out, k=g.rotation // 90, axes=(0, 1))
