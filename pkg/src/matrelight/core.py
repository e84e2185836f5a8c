"""Raster conventions, error types and elementary pixel operations.

Planes are 2-D ``float64`` arrays indexed ``[row, col]`` (``[y, x]``); RGB
images are ``(height, width, 3)`` arrays. Loaded images live in ``[0, 1]``.
"""

from __future__ import annotations

import numpy as np

GRAY_WEIGHTS = (0.2989, 0.587, 0.114)


class RelightError(Exception):
    """Base class for all errors raised by this package."""


class SizingError(RelightError, ValueError):
    """Image, patch or map dimensions are incompatible."""


class SolverError(RelightError):
    """The iterative WLS solve did not reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MaterialError(RelightError, ValueError):
    """Material label map does not agree with the palette."""


class ImageIOError(RelightError, OSError):
    """An image file could not be read or written."""


class PipelineError(RelightError):
    """Wraps a failure inside the relighting pipeline with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def gray(r, g, b):
    """Luminance on the 0-255 scale, ``0.2989 R + 0.587 G + 0.114 B``.

    Accepts scalars or broadcastable arrays.
    """
    return r * GRAY_WEIGHTS[0] + g * GRAY_WEIGHTS[1] + b * GRAY_WEIGHTS[2]


def luminance(img: np.ndarray) -> np.ndarray:
    """Gray plane of a ``[0, 1]`` RGB image, still in ``[0, 1]``."""
    img = np.asarray(img, dtype=np.float64)
    return gray(img[..., 0] * 255.0, img[..., 1] * 255.0, img[..., 2] * 255.0) / 255.0


def as_plane(plane) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise SizingError(f"expected a non-empty 2-D plane, got shape {plane.shape}")
    return plane


def as_rgb(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise SizingError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def forward_diff_x(plane) -> np.ndarray:
    """``l(x+1, y) - l(x, y)``, zero in the last column."""
    plane = as_plane(plane)
    out = np.zeros_like(plane)
    out[:, :-1] = plane[:, 1:] - plane[:, :-1]
    return out


def forward_diff_y(plane) -> np.ndarray:
    """``l(x, y+1) - l(x, y)``, zero in the last row."""
    plane = as_plane(plane)
    out = np.zeros_like(plane)
    out[:-1, :] = plane[1:, :] - plane[:-1, :]
    return out


def gradient_magnitude(plane) -> np.ndarray:
    """Per-pixel forward-difference gradient norm (replicated trailing edge)."""
    gx = forward_diff_x(plane)
    gy = forward_diff_y(plane)
    return np.sqrt(gx * gx + gy * gy)
