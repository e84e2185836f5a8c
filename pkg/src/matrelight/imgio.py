"""8-bit image reading and writing.

Saved values are quantized as ``floor(v * 255 + 0.5)`` (round half away
from zero for non-negative inputs), so output bytes are reproducible.
"""

from __future__ import annotations

import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from matrelight.core import ImageIOError, as_plane, as_rgb


@dataclass(frozen=True)
class LoadedImage:
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    bit_depth: int
    channels: int


def load_image(path) -> LoadedImage:
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("RGBA", "LA", "PA") or (mode == "P" and "transparency" in im.info):
                warnings.warn(f"{path}: dropping alpha channel", stacklevel=2)
            if mode == "L":
                channels = 1
                arr = np.asarray(im)
                arr = np.repeat(arr[..., None], 3, axis=2)
            elif mode == "LA":
                channels = 2
                arr = np.repeat(np.asarray(im)[..., :1], 3, axis=2)
            elif mode in ("RGB", "RGBA", "P", "PA"):
                channels = len(im.getbands()) if mode != "P" else 3
                arr = np.asarray(im.convert("RGB"))
            else:
                raise ImageIOError(f"{path}: unsupported pixel format {mode!r} (need 8-bit gray or RGB)")
    except ImageIOError:
        raise
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    return LoadedImage(arr.astype(np.float64) / 255.0, 8, channels)


def quantize(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot save non-finite pixel values")
    return np.clip(np.floor(values * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _atomic_save(im: Image.Image, path: Path) -> None:
    # write next to the target then rename, so failures never leave partial files
    fmt = Image.registered_extensions().get(path.suffix.lower())
    if fmt is None:
        raise ImageIOError(f"{path}: unknown image extension {path.suffix!r}")
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            im.save(fh, format=fmt)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except (OSError, ValueError) as exc:
        Path(tmp).unlink(missing_ok=True)
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def save_image(img, path) -> None:
    """Write an ``(H, W, 3)`` ``[0, 1]`` image as 8-bit RGB."""
    _atomic_save(Image.fromarray(quantize(as_rgb(img))), Path(path))


def save_plane(plane, path) -> None:
    """Write a ``[0, 1]`` plane as 8-bit grayscale."""
    _atomic_save(Image.fromarray(quantize(as_plane(plane))), Path(path))


def save_labels(labels, path) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must fit in 8 bits")
    _atomic_save(Image.fromarray(labels.astype(np.uint8)), Path(path))
