"""Brute-force reference implementations used only by the tests.

Nothing here calls into the pixel kernels, stencils or solver of
``matrelight``; only plain data containers are imported.
"""

import numpy as np

from matrelight.patchmatch import NearestNeighborField


def patch_ssd(A, B, ax, ay, bx, by, p):
    total = 0.0
    for j in range(p):
        for i in range(p):
            for c in range(3):
                total += (float(A[ay + j, ax + i, c]) - float(B[by + j, bx + i, c])) ** 2
    return total


def brute_force_nnf(A, B, patch_size):
    """Exhaustive NNF; ties go to the smallest (dy, dx)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    p = patch_size
    gh, gw = A.shape[0] - p + 1, A.shape[1] - p + 1
    bh, bw = B.shape[0] - p + 1, B.shape[1] - p + 1
    # stack every A patch once: (gh, gw, p*p*3)
    patches = np.stack(
        [A[j:j + gh, i:i + gw, :] for j in range(p) for i in range(p)], axis=2
    ).reshape(gh, gw, -1)
    best = np.full((gh, gw), np.inf)
    best_t = np.zeros((gh, gw, 2), dtype=np.int64)
    # row-major target order == lexicographic (dy, dx) order for every fixed cell
    for ty in range(bh):
        for tx in range(bw):
            target = B[ty:ty + p, tx:tx + p, :].reshape(-1)
            d = ((patches - target) ** 2).sum(axis=-1)
            better = d < best
            best[better] = d[better]
            best_t[better] = (ty, tx)
    ys, xs = np.mgrid[0:gh, 0:gw]
    offsets = np.stack([best_t[..., 1] - xs, best_t[..., 0] - ys], axis=-1)
    return NearestNeighborField(offsets, best, p, (B.shape[0], B.shape[1]))


def vote_warp(B, offsets, patch_size, out_shape):
    """Per-pixel accumulation of every matched patch that covers the pixel."""
    h, w = out_shape
    p = patch_size
    gh, gw = offsets.shape[:2]
    out = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(w):
            acc = np.zeros(3)
            n = 0
            for cy in range(max(0, y - p + 1), min(gh, y + 1)):
                for cx in range(max(0, x - p + 1), min(gw, x + 1)):
                    dx, dy = offsets[cy, cx]
                    acc += B[y + dy, x + dx]
                    n += 1
            out[y, x] = acc / n
    return out


def gradient_table(plane):
    """Forward-difference gradient magnitude, one pixel at a time."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = plane[y, x + 1] - plane[y, x] if x + 1 < w else 0.0
            gy = plane[y + 1, x] - plane[y, x] if y + 1 < h else 0.0
            out[y, x] = (gx * gx + gy * gy) ** 0.5
    return out


def dense_wls_matrix(l, lam, params, guide=None):
    """Hessian/2 of the WLS energy, assembled edge by edge."""
    l = np.asarray(l, dtype=np.float64)
    g = l if guide is None else np.asarray(guide, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    h, w = l.shape
    n = h * w
    M = np.eye(n)

    def couple(p, q, weight):
        M[p, p] += weight
        M[q, q] += weight
        M[p, q] -= weight
        M[q, p] -= weight

    for y in range(h):
        for x in range(w):
            p = y * w + x
            if x + 1 < w:
                grad = abs(g[y, x + 1] - g[y, x])
                couple(p, p + 1, params.lambda_scale * lam[y, x] / (grad ** params.alpha_wls + params.epsilon))
            if y + 1 < h:
                grad = abs(g[y + 1, x] - g[y, x])
                couple(p, p + w, params.lambda_scale * lam[y, x] / (grad ** params.alpha_wls + params.epsilon))
    return M


def dense_wls_solve(l, lam, params, guide=None):
    """Direct solution of the WLS normal equations (pixel count <= 1024)."""
    l = np.asarray(l, dtype=np.float64)
    if l.size > 1024:
        raise ValueError("dense oracle is limited to 1024 pixels")
    M = dense_wls_matrix(l, lam, params, guide)
    return np.linalg.solve(M, l.ravel()).reshape(l.shape)
