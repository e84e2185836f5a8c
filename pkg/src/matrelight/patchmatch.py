"""PatchMatch nearest-neighbor field from an input image A to a reference B.

Patches are addressed by their top-left corner. The field stores, for every
valid patch of A, the integer offset ``(dx, dy)`` to its match in B together
with the cached squared-difference distance of that match.

The per-cell kernels are compiled with numba. Random numbers are drawn up
front from a seeded ``numpy.random.Generator`` (one block per cell), so the
results never depend on kernel scheduling.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from matrelight.core import ImageIOError, SizingError, as_rgb

NNF_MAGIC = b"NNF1"


@dataclass(frozen=True)
class PatchMatchParams:
    patch_size: int = 7
    iterations: int = 5
    w: int | None = None  # None -> max(width, height) of the reference
    alpha_search: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.w is not None and self.w < 1:
            raise ValueError(f"search radius w must be >= 1, got {self.w}")
        if not 0.0 < self.alpha_search < 1.0:
            raise ValueError(f"alpha_search must lie in (0, 1), got {self.alpha_search}")

    def radius(self, reference_shape) -> int:
        return self.w if self.w is not None else max(reference_shape[0], reference_shape[1])


@dataclass
class NearestNeighborField:
    """Offsets ``(gh, gw, 2)`` as ``(dx, dy)`` and distances ``(gh, gw)``."""

    offsets: np.ndarray
    distances: np.ndarray
    patch_size: int
    target_shape: tuple[int, int]  # (height, width) of B
    history: list = field(default_factory=list, repr=False, compare=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.distances.shape

    @property
    def source_shape(self) -> tuple[int, int]:
        gh, gw = self.grid_shape
        return gh + self.patch_size - 1, gw + self.patch_size - 1

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        """Top-left ``(ty, tx)`` of the matched B patch for every cell."""
        gh, gw = self.grid_shape
        ys, xs = np.mgrid[0:gh, 0:gw]
        return ys + self.offsets[..., 1], xs + self.offsets[..., 0]

    def copy(self) -> "NearestNeighborField":
        return replace(self, offsets=self.offsets.copy(), distances=self.distances.copy(), history=[])


def check_sizes(a_shape, b_shape, patch_size: int) -> None:
    for name, shape in (("input", a_shape), ("reference", b_shape)):
        if shape[0] < patch_size or shape[1] < patch_size:
            raise SizingError(
                f"{name} image is {shape[1]}x{shape[0]}, smaller than the {patch_size}x{patch_size} patch"
            )


def search_radii(w: float, alpha: float) -> list[float]:
    """Radii ``w * alpha**i`` for every rung with radius >= 1."""
    radii = []
    i = 0
    while w * alpha**i >= 1.0:
        radii.append(w * alpha**i)
        i += 1
    return radii


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _dist(A, B, ay, ax, by, bx, p):
    d = 0.0
    for j in range(p):
        for i in range(p):
            for c in range(3):
                t = A[ay + j, ax + i, c] - B[by + j, bx + i, c]
                d += t * t
    return d


@njit(cache=True)
def _clamp(v, hi):
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


@njit(cache=True)
def _fill_distances(A, B, offsets, p, out):
    gh, gw = out.shape
    for y in range(gh):
        for x in range(gw):
            out[y, x] = _dist(A, B, y, x, y + offsets[y, x, 1], x + offsets[y, x, 0], p)


@njit(cache=True)
def _try(A, B, offsets, dist, p, y, x, ty, tx, bh, bw):
    ty = _clamp(ty, bh - 1)
    tx = _clamp(tx, bw - 1)
    d = _dist(A, B, y, x, ty, tx, p)
    if d < dist[y, x]:
        dist[y, x] = d
        offsets[y, x, 0] = tx - x
        offsets[y, x, 1] = ty - y


@njit(cache=True)
def _propagate(A, B, offsets, dist, p, bh, bw, forward):
    gh, gw = dist.shape
    step = 1 if forward else -1
    for k in range(gh):
        y = k if forward else gh - 1 - k
        for m in range(gw):
            x = m if forward else gw - 1 - m
            # neighbors already visited in this scan: (x-s, y), (x, y-s), (x-s, y-s)
            nx = x - step
            ny = y - step
            if 0 <= nx < gw:
                _try(A, B, offsets, dist, p, y, x, y + offsets[y, nx, 1], x + offsets[y, nx, 0], bh, bw)
            if 0 <= ny < gh:
                _try(A, B, offsets, dist, p, y, x, y + offsets[ny, x, 1], x + offsets[ny, x, 0], bh, bw)
            if 0 <= nx < gw and 0 <= ny < gh:
                _try(A, B, offsets, dist, p, y, x, y + offsets[ny, nx, 1], x + offsets[ny, nx, 0], bh, bw)


@njit(cache=True)
def _round_away(v):
    if v >= 0.0:
        return int(math.floor(v + 0.5))
    return -int(math.floor(-v + 0.5))


@njit(cache=True)
def _random_search(A, B, offsets, dist, p, bh, bw, radii, R):
    gh, gw = dist.shape
    for y in range(gh):
        for x in range(gw):
            vx = offsets[y, x, 0]
            vy = offsets[y, x, 1]
            for i in range(radii.shape[0]):
                ux = vx + _round_away(radii[i] * R[y, x, i, 0])
                uy = vy + _round_away(radii[i] * R[y, x, i, 1])
                _try(A, B, offsets, dist, p, y, x, y + uy, x + ux, bh, bw)


# --------------------------------------------------------------------------
# public operations


def _prep(img) -> np.ndarray:
    return np.ascontiguousarray(as_rgb(img), dtype=np.float64)


def patch_distance(A, B, a, v, patch_size: int) -> float:
    """Sum of squared differences between patch ``a`` of A and ``a + v`` of B.

    ``a`` is ``(x, y)`` and ``v`` is ``(dx, dy)``; both patches must be in bounds.
    """
    A, B = _prep(A), _prep(B)
    ax, ay = int(a[0]), int(a[1])
    bx, by = ax + int(v[0]), ay + int(v[1])
    p = int(patch_size)
    for name, img, x, y in (("A", A, ax, ay), ("B", B, bx, by)):
        if x < 0 or y < 0 or x + p > img.shape[1] or y + p > img.shape[0]:
            raise SizingError(f"patch at ({x}, {y}) of size {p} leaves image {name}")
    return float(_dist(A, B, ay, ax, by, bx, p))


def init_nnf(A, B, params: PatchMatchParams, rng: np.random.Generator | None = None) -> NearestNeighborField:
    """Random field: each cell points at a uniformly drawn valid patch of B."""
    A, B = _prep(A), _prep(B)
    p = params.patch_size
    check_sizes(A.shape, B.shape, p)
    rng = np.random.default_rng(params.seed) if rng is None else rng
    gh, gw = A.shape[0] - p + 1, A.shape[1] - p + 1
    bh, bw = B.shape[0] - p + 1, B.shape[1] - p + 1
    ty = rng.integers(0, bh, size=(gh, gw))
    tx = rng.integers(0, bw, size=(gh, gw))
    ys, xs = np.mgrid[0:gh, 0:gw]
    offsets = np.stack([tx - xs, ty - ys], axis=-1).astype(np.int64)
    dist = np.empty((gh, gw), dtype=np.float64)
    _fill_distances(A, B, offsets, p, dist)
    return NearestNeighborField(offsets, dist, p, (B.shape[0], B.shape[1]))


def _check_field(nnf: NearestNeighborField, A, B) -> None:
    p = nnf.patch_size
    if A.shape[:2] != nnf.source_shape or B.shape[:2] != tuple(nnf.target_shape):
        raise SizingError("nearest-neighbor field was built for different image sizes")
    check_sizes(A.shape, B.shape, p)


def propagate(nnf: NearestNeighborField, A, B, scan_direction: str = "forward") -> NearestNeighborField:
    """One propagation pass; returns a new field, the input is left untouched."""
    if scan_direction not in ("forward", "backward"):
        raise ValueError(f"scan_direction must be 'forward' or 'backward', got {scan_direction!r}")
    A, B = _prep(A), _prep(B)
    _check_field(nnf, A, B)
    out = nnf.copy()
    p = nnf.patch_size
    _propagate(A, B, out.offsets, out.distances, p, B.shape[0] - p + 1, B.shape[1] - p + 1,
               scan_direction == "forward")
    return out


def random_search(nnf: NearestNeighborField, A, B, params: PatchMatchParams,
                  rng: np.random.Generator | None = None) -> NearestNeighborField:
    """Exponentially shrinking random search around every cell's current offset."""
    A, B = _prep(A), _prep(B)
    _check_field(nnf, A, B)
    rng = np.random.default_rng(params.seed) if rng is None else rng
    radii = np.array(search_radii(params.radius(B.shape), params.alpha_search), dtype=np.float64)
    gh, gw = nnf.grid_shape
    R = rng.uniform(-1.0, 1.0, size=(gh, gw, len(radii), 2))
    out = nnf.copy()
    p = nnf.patch_size
    _random_search(A, B, out.offsets, out.distances, p, B.shape[0] - p + 1, B.shape[1] - p + 1, radii, R)
    return out


def compute_nnf(A, B, params: PatchMatchParams, keep_history: bool = False) -> NearestNeighborField:
    """Initialize, then alternate propagation and random search.

    Even rounds scan forward, odd rounds backward. With ``keep_history`` the
    returned field carries a snapshot after every propagate / search call.
    """
    A, B = _prep(A), _prep(B)
    rng = np.random.default_rng(params.seed)
    nnf = init_nnf(A, B, params, rng)
    history = [nnf.copy()] if keep_history else []
    for it in range(params.iterations):
        nnf = propagate(nnf, A, B, "forward" if it % 2 == 0 else "backward")
        if keep_history:
            history.append(nnf.copy())
        nnf = random_search(nnf, A, B, params, rng)
        if keep_history:
            history.append(nnf.copy())
    nnf.history = history
    return nnf


def warp(B, nnf: NearestNeighborField, patch_size: int | None = None) -> np.ndarray:
    """Rebuild B on A's grid by averaging every matched patch covering a pixel."""
    B = as_rgb(B)
    p = nnf.patch_size if patch_size is None else int(patch_size)
    if p != nnf.patch_size:
        raise SizingError(f"patch size {p} does not match the field's {nnf.patch_size}")
    if B.shape[:2] != tuple(nnf.target_shape):
        raise SizingError("reference size does not match the field")
    gh, gw = nnf.grid_shape
    ty, tx = nnf.targets()
    acc = np.zeros(nnf.source_shape + (3,), dtype=np.float64)
    count = np.zeros(nnf.source_shape, dtype=np.float64)
    for j in range(p):
        for i in range(p):
            acc[j:j + gh, i:i + gw] += B[ty + j, tx + i]
            count[j:j + gh, i:i + gw] += 1.0
    return acc / count[..., None]


# --------------------------------------------------------------------------
# NNF sidecar: "NNF1", width, height, patch_size (u32 LE), then (dx, dy) i32 LE per cell


def save_nnf(nnf: NearestNeighborField, path) -> None:
    gh, gw = nnf.grid_shape
    body = np.ascontiguousarray(nnf.offsets, dtype="<i4").tobytes()
    try:
        Path(path).write_bytes(NNF_MAGIC + struct.pack("<III", gw, gh, nnf.patch_size) + body)
    except OSError as exc:
        raise ImageIOError(f"cannot write NNF sidecar {path}: {exc}") from exc


def read_nnf(path) -> tuple[np.ndarray, int]:
    """Parse a sidecar; returns ``(offsets (gh, gw, 2) as (dx, dy), patch_size)``."""
    data = Path(path).read_bytes()
    if data[:4] != NNF_MAGIC:
        raise ImageIOError(f"{path}: not an NNF1 sidecar")
    gw, gh, p = struct.unpack("<III", data[4:16])
    body = np.frombuffer(data[16:], dtype="<i4")
    if body.size != gw * gh * 2:
        raise ImageIOError(f"{path}: truncated sidecar ({body.size} values for {gw}x{gh} cells)")
    return body.reshape(gh, gw, 2).astype(np.int64), p
