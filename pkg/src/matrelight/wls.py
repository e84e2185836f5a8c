"""Material-weighted WLS decomposition into large-scale and detail layers.

The smoothed layer ``s`` minimizes

    sum_p (l - s)^2 + scale * sum_p lam(p) * (sx^2 / (|lx|^a + eps) + sy^2 / (|ly|^a + eps))

with forward differences (zero across the trailing edge). Setting the
gradient to zero gives ``(I + scale * L) s = l`` where ``L`` is the graph
Laplacian over +x / +y neighbor edges. That system is solved with
Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from matrelight.core import (
    SizingError,
    SolverError,
    as_plane,
    forward_diff_x,
    forward_diff_y,
    gradient_magnitude,
)
from matrelight.materials import MaterialMap, MaterialPalette, material_gray_term

log = logging.getLogger(__name__)

DETAIL_CLAMP = 100.0


@dataclass(frozen=True)
class WlsParams:
    alpha_wls: float = 1.2
    epsilon: float = 1e-4
    lambda_scale: float = 1.0
    solver_tol: float = 1e-6
    solver_max_iter: int | None = None  # None -> 10 * pixel count
    epsilon_div: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.epsilon_div > 0:
            raise ValueError(f"epsilon_div must be > 0, got {self.epsilon_div}")
        if not self.alpha_wls > 0:
            raise ValueError(f"alpha_wls must be > 0, got {self.alpha_wls}")
        if not self.lambda_scale >= 0:
            raise ValueError(f"lambda_scale must be >= 0, got {self.lambda_scale}")
        if not 0 < self.solver_tol < 1:
            raise ValueError(f"solver_tol must lie in (0, 1), got {self.solver_tol}")
        if self.solver_max_iter is not None and self.solver_max_iter < 1:
            raise ValueError(f"solver_max_iter must be >= 1, got {self.solver_max_iter}")


@dataclass(frozen=True)
class WlsSystem:
    """Sparse SPD system ``matrix @ s = rhs`` for one ``(height, width)`` plane."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    shape: tuple[int, int]
    weights_x: np.ndarray  # scaled edge weight between p and p + x
    weights_y: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


def lambda_map(lum, mmap: MaterialMap, palette: MaterialPalette) -> np.ndarray:
    """Per-pixel smoothness: luminance gradient magnitude plus material gray term."""
    lum = as_plane(lum)
    if lum.shape != mmap.shape:
        raise SizingError(f"luminance is {lum.shape} but the material map is {mmap.shape}")
    return gradient_magnitude(lum) + material_gray_term(mmap, palette)


def edge_weights(guide, lam, params: WlsParams) -> tuple[np.ndarray, np.ndarray]:
    """Scaled smoothness weights of the +x and +y edges (zero on trailing edges).

    ``guide`` supplies the gradients in the denominators; normally it is the
    channel being smoothed.
    """
    guide = as_plane(guide)
    lam = as_plane(lam)
    if guide.shape != lam.shape:
        raise SizingError(f"channel is {guide.shape} but the lambda map is {lam.shape}")
    a, eps = params.alpha_wls, params.epsilon
    wx = params.lambda_scale * lam / (np.abs(forward_diff_x(guide)) ** a + eps)
    wy = params.lambda_scale * lam / (np.abs(forward_diff_y(guide)) ** a + eps)
    wx[:, -1] = 0.0
    wy[-1, :] = 0.0
    return wx, wy


def build_system(l, lam, params: WlsParams, guide=None) -> WlsSystem:
    """Assemble ``(I + scale * L) s = l``; ``guide`` defaults to ``l``."""
    l = as_plane(l)
    guide = l if guide is None else as_plane(guide)
    if guide.shape != l.shape:
        raise SizingError(f"guide is {guide.shape} but the channel is {l.shape}")
    wx, wy = edge_weights(guide, lam, params)
    h, w = l.shape
    n = h * w
    fx = wx.ravel()
    fy = wy.ravel()
    # each edge weight lands on both endpoints of the diagonal
    diag = 1.0 + fx + fy
    diag[1:] += fx[:-1]
    diag[w:] += fy[:-w]
    matrix = sp.diags(
        [diag, -fx[:-1], -fx[:-1], -fy[:-w], -fy[:-w]],
        [0, 1, -1, w, -w],
        shape=(n, n),
        format="csr",
    )
    return WlsSystem(matrix, l.ravel().copy(), (h, w), wx, wy)


def solve(system: WlsSystem, params: WlsParams) -> np.ndarray:
    """Jacobi-preconditioned CG started from ``s = l``.

    Stops when ``||b - M s|| / ||b|| <= solver_tol`` (true residual, checked
    on exit); raises SolverError after ``solver_max_iter`` iterations.
    """
    M, b = system.matrix, system.rhs
    n = b.size
    max_iter = params.solver_max_iter or 10 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(system.shape)
    target = params.solver_tol * bnorm
    inv_diag = 1.0 / M.diagonal()

    x = b.copy()
    r = b - M @ x
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm > target:
        z = inv_diag * r
        d = z.copy()
        rz = r @ z
        while it < max_iter:
            it += 1
            q = M @ d
            step = rz / (d @ q)
            x += step * d
            r -= step * q
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                # recursive residual drifts; confirm against the true one
                r = b - M @ x
                rnorm = np.linalg.norm(r)
                if rnorm <= target:
                    break
            z = inv_diag * r
            rz_new = r @ z
            d = z + (rz_new / rz) * d
            rz = rz_new
    if rnorm > target:
        raise SolverError(
            f"WLS solve stopped after {it} iterations at relative residual {rnorm / bnorm:.3e} "
            f"(target {params.solver_tol:.1e})",
            residual=rnorm / bnorm,
            iterations=it,
        )
    log.debug("WLS solve: %d unknowns, %d iterations, residual %.2e", n, it, rnorm / bnorm)
    return x.reshape(system.shape)


def decompose(channel, lam, params: WlsParams, guide=None) -> tuple[np.ndarray, np.ndarray]:
    """Split a channel into ``(s, d)`` with ``d = l / max(s, epsilon_div)``.

    ``d`` is returned unclamped so ``d * max(s, epsilon_div)`` gives back ``l``.
    """
    l = as_plane(channel)
    s = solve(build_system(l, lam, params, guide), params)
    d = l / np.maximum(s, params.epsilon_div)
    return s, d


def energy(l, s, lam, params: WlsParams, guide=None) -> float:
    """Discrete objective that ``build_system`` minimizes."""
    l = as_plane(l)
    s = as_plane(s)
    if l.shape != s.shape:
        raise SizingError(f"l is {l.shape} but s is {s.shape}")
    wx, wy = edge_weights(l if guide is None else guide, lam, params)
    sx = forward_diff_x(s)
    sy = forward_diff_y(s)
    return float(np.sum((l - s) ** 2) + np.sum(wx * sx * sx) + np.sum(wy * sy * sy))
