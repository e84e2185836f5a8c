import numpy as np
import pytest
from scipy.stats import chisquare

from matrelight.core import SizingError
from matrelight.patchmatch import (
    NearestNeighborField,
    PatchMatchParams,
    compute_nnf,
    init_nnf,
    patch_distance,
    propagate,
    random_search,
    read_nnf,
    save_nnf,
    search_radii,
    warp,
)
from oracle import brute_force_nnf, patch_ssd, vote_warp


def assert_coherent(nnf, A, B):
    gh, gw = nnf.grid_shape
    p = nnf.patch_size
    ty, tx = nnf.targets()
    assert ty.min() >= 0 and tx.min() >= 0
    assert ty.max() <= B.shape[0] - p and tx.max() <= B.shape[1] - p
    for y in range(gh):
        for x in range(gw):
            assert nnf.distances[y, x] == patch_distance(A, B, (x, y), nnf.offsets[y, x], p)


# ---------------------------------------------------------------- parameters


@pytest.mark.parametrize(
    "kwargs",
    [dict(patch_size=0), dict(iterations=0), dict(w=0), dict(alpha_search=0.0), dict(alpha_search=1.0)],
)
def test_params_validated(kwargs):
    with pytest.raises(ValueError):
        PatchMatchParams(**kwargs)


def test_search_radii_schedule():
    assert search_radii(32, 0.5) == [32, 16, 8, 4, 2, 1]
    assert search_radii(1, 0.5) == [1]


# ---------------------------------------------------------------- distance


def test_distance_identical_is_zero(rng):
    A = rng.random((6, 6, 3))
    assert patch_distance(A, A, (1, 2), (0, 0), 3) == 0.0


def test_distance_single_pixel():
    A = np.full((1, 1, 3), 0.5)
    B = np.array([[[0.5, 0.5, 1.0]]])
    assert patch_distance(A, B, (0, 0), (0, 0), 1) == pytest.approx(0.25)


def test_distance_matches_triple_loop(rng):
    A = rng.random((7, 7, 3))
    B = rng.random((6, 8, 3))
    for _ in range(10):
        ax, ay = rng.integers(0, 5, size=2)
        bx, by = rng.integers(0, 6), rng.integers(0, 4)
        got = patch_distance(A, B, (ax, ay), (bx - ax, by - ay), 3)
        assert got == pytest.approx(patch_ssd(A, B, ax, ay, bx, by, 3), rel=1e-12)


def test_distance_symmetric(rng):
    A = rng.random((6, 6, 3))
    B = rng.random((6, 6, 3))
    assert patch_distance(A, B, (1, 0), (2, 3), 3) == pytest.approx(patch_distance(B, A, (3, 3), (-2, -3), 3))


def test_distance_out_of_bounds():
    A = np.zeros((4, 4, 3))
    with pytest.raises(SizingError):
        patch_distance(A, A, (2, 2), (1, 0), 2)


# ---------------------------------------------------------------- initialization


def test_init_single_valid_target(rng):
    A = rng.random((9, 9, 3))
    B = rng.random((3, 3, 3))
    nnf = init_nnf(A, B, PatchMatchParams(patch_size=3))
    ty, tx = nnf.targets()
    assert not ty.any() and not tx.any()
    assert_coherent(nnf, A, B)


def test_init_deterministic(rng):
    A = rng.random((10, 10, 3))
    B = rng.random((12, 9, 3))
    params = PatchMatchParams(patch_size=3, seed=5)
    a, b = init_nnf(A, B, params), init_nnf(A, B, params)
    assert np.array_equal(a.offsets, b.offsets) and np.array_equal(a.distances, b.distances)


def test_init_uniform_over_targets(rng):
    A = rng.random((64, 64, 3))
    B = rng.random((16, 16, 3))
    nnf = init_nnf(A, B, PatchMatchParams(patch_size=1, seed=3))
    ty, tx = nnf.targets()
    # 4096 draws over 16 x 16 targets
    counts = np.bincount((ty * 16 + tx).ravel(), minlength=256)
    assert chisquare(counts).pvalue > 1e-3
    assert chisquare(np.bincount(ty.ravel(), minlength=16)).pvalue > 1e-3
    assert chisquare(np.bincount(tx.ravel(), minlength=16)).pvalue > 1e-3


def test_init_rejects_small_reference(rng):
    with pytest.raises(SizingError, match="reference"):
        init_nnf(rng.random((8, 8, 3)), rng.random((4, 8, 3)), PatchMatchParams(patch_size=5))


# ---------------------------------------------------------------- propagation


def test_propagate_keeps_global_optimum(rng):
    A = rng.random((10, 10, 3))
    B = rng.random((10, 10, 3))
    best = brute_force_nnf(A, B, 3)
    for direction in ("forward", "backward"):
        out = propagate(best, A, B, direction)
        np.testing.assert_array_equal(out.offsets, best.offsets)


def test_propagate_spreads_identity_from_corner(rng):
    A = rng.random((6, 6, 3))
    nnf = init_nnf(A, A, PatchMatchParams(patch_size=3, seed=1))
    nnf.offsets[0, 0] = (0, 0)
    nnf.distances[0, 0] = 0.0
    out = propagate(nnf, A, A, "forward")
    # forward scan: every cell has (x-1, y) or (x, y-1) visited before it
    assert not out.distances.any()
    assert not out.offsets.any()


def test_propagate_backward_spreads_from_far_corner(rng):
    A = rng.random((6, 6, 3))
    nnf = init_nnf(A, A, PatchMatchParams(patch_size=3, seed=1))
    nnf.offsets[-1, -1] = (0, 0)
    nnf.distances[-1, -1] = 0.0
    out = propagate(nnf, A, A, "backward")
    assert not out.distances.any()


def test_propagate_monotone_and_pure(rng):
    A = rng.random((16, 16, 3))
    B = rng.random((14, 18, 3))
    nnf = init_nnf(A, B, PatchMatchParams(patch_size=4))
    before = nnf.copy()
    out = propagate(nnf, A, B, "forward")
    assert np.all(out.distances <= before.distances)
    np.testing.assert_array_equal(nnf.offsets, before.offsets)
    assert_coherent(out, A, B)


def test_propagate_rejects_bad_direction(rng):
    A = rng.random((5, 5, 3))
    nnf = init_nnf(A, A, PatchMatchParams(patch_size=2))
    with pytest.raises(ValueError):
        propagate(nnf, A, A, "sideways")


# ---------------------------------------------------------------- random search


def test_random_search_monotone_and_coherent(rng):
    A = rng.random((16, 16, 3))
    B = rng.random((20, 12, 3))
    params = PatchMatchParams(patch_size=3, seed=2)
    nnf = init_nnf(A, B, params)
    out = random_search(nnf, A, B, params, np.random.default_rng(9))
    assert np.all(out.distances <= nnf.distances)
    assert_coherent(out, A, B)


def test_random_search_radius_one(rng):
    A = rng.random((8, 8, 3))
    params = PatchMatchParams(patch_size=2, w=1)
    nnf = init_nnf(A, A, params)
    out = random_search(nnf, A, A, params)
    moved = np.abs(out.offsets - nnf.offsets).max()
    assert moved <= 1


def test_random_search_identity_never_regresses(rng):
    A = rng.random((12, 12, 3))
    params = PatchMatchParams(patch_size=3, seed=4)
    nnf = init_nnf(A, A, params)
    g = np.random.default_rng(0)
    zero_before = nnf.distances == 0
    for _ in range(5):
        nnf = random_search(nnf, A, A, params, g)
        assert np.all(nnf.distances[zero_before] == 0)
        zero_before = nnf.distances == 0


# ---------------------------------------------------------------- full NNF


def test_compute_nnf_self_match(rng):
    A = rng.random((32, 32, 3))
    nnf = compute_nnf(A, A, PatchMatchParams(patch_size=5, iterations=5, seed=0))
    assert np.mean(nnf.distances == 0) >= 0.99


def test_compute_nnf_more_iterations_not_worse(rng):
    A = rng.random((24, 24, 3))
    B = rng.random((24, 24, 3))
    one = compute_nnf(A, B, PatchMatchParams(patch_size=5, iterations=1, seed=3))
    five = compute_nnf(A, B, PatchMatchParams(patch_size=5, iterations=5, seed=3))
    assert five.distances.mean() <= one.distances.mean()


def test_compute_nnf_history_is_monotone(rng):
    A = rng.random((20, 20, 3))
    B = rng.random((20, 20, 3))
    nnf = compute_nnf(A, B, PatchMatchParams(patch_size=4, iterations=3, seed=6), keep_history=True)
    assert len(nnf.history) == 1 + 2 * 3
    for prev, cur in zip(nnf.history, nnf.history[1:]):
        assert np.all(cur.distances <= prev.distances)


def test_compute_nnf_deterministic(rng):
    A = rng.random((20, 20, 3))
    B = rng.random((18, 22, 3))
    params = PatchMatchParams(patch_size=5, seed=11)
    a, b = compute_nnf(A, B, params), compute_nnf(A, B, params)
    assert np.array_equal(a.offsets, b.offsets)
    assert np.array_equal(a.distances, b.distances)


def test_single_patch_limit_matches_oracle(rng):
    A = rng.random((6, 6, 3))
    B = rng.random((6, 6, 3))
    nnf = compute_nnf(A, B, PatchMatchParams(patch_size=6))
    ref = brute_force_nnf(A, B, 6)
    np.testing.assert_array_equal(nnf.offsets, ref.offsets)
    assert nnf.offsets.shape == (1, 1, 2) and not nnf.offsets.any()


def test_brute_force_ties_prefer_zero_offset(rng):
    A = rng.random((8, 8, 3))
    assert not brute_force_nnf(A, A, 3).offsets.any()
    flat = np.full((6, 6, 3), 0.4)
    # every target ties, the smallest (dy, dx) wins
    nnf = brute_force_nnf(flat, flat, 2)
    ty, tx = nnf.targets()
    assert not ty.any() and not tx.any()


def test_brute_force_beats_patchmatch(rng):
    A = rng.random((16, 16, 3))
    B = rng.random((16, 16, 3))
    pm = compute_nnf(A, B, PatchMatchParams(patch_size=3, seed=1))
    assert np.all(brute_force_nnf(A, B, 3).distances <= pm.distances + 1e-12)


# ---------------------------------------------------------------- warp


def test_warp_identity_field(rng):
    B = rng.random((9, 11, 3))
    nnf = NearestNeighborField(np.zeros((7, 9, 2), dtype=np.int64), np.zeros((7, 9)), 3, (9, 11))
    np.testing.assert_allclose(warp(B, nnf), B, atol=1e-15)


def test_warp_constant_reference(rng):
    B = np.full((10, 10, 3), 0.37)
    A = rng.random((12, 8, 3))
    nnf = init_nnf(A, B, PatchMatchParams(patch_size=3, seed=2))
    np.testing.assert_allclose(warp(B, nnf), 0.37, atol=1e-15)


def test_warp_matches_vote_oracle(rng):
    B = rng.random((8, 8, 3))
    p = 3
    offsets = np.zeros((6, 6, 2), dtype=np.int64)
    # hand-built field: mirror each cell's column, shift rows down where possible
    for y in range(6):
        for x in range(6):
            offsets[y, x] = ((5 - x) - x, min(y + 1, 5) - y)
    nnf = NearestNeighborField(offsets, np.zeros((6, 6)), p, (8, 8))
    np.testing.assert_allclose(warp(B, nnf), vote_warp(B, offsets, p, (8, 8)), atol=1e-14)


def test_warp_stays_within_reference_range(rng):
    A = rng.random((16, 16, 3))
    B = 0.2 + 0.5 * rng.random((14, 15, 3))
    out = warp(B, compute_nnf(A, B, PatchMatchParams(patch_size=4, seed=0)))
    assert out.shape == A.shape
    lo = B.reshape(-1, 3).min(axis=0)
    hi = B.reshape(-1, 3).max(axis=0)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


# ---------------------------------------------------------------- sidecar


def test_nnf_sidecar_round_trip(tmp_path, rng):
    A = rng.random((12, 10, 3))
    B = rng.random((9, 11, 3))
    nnf = compute_nnf(A, B, PatchMatchParams(patch_size=3, seed=1))
    path = tmp_path / "f.nnf"
    save_nnf(nnf, path)
    raw = path.read_bytes()
    assert raw[:4] == b"NNF1"
    assert int.from_bytes(raw[4:8], "little") == 8  # grid width
    assert int.from_bytes(raw[8:12], "little") == 10  # grid height
    assert len(raw) == 16 + 8 * 8 * 10
    offsets, p = read_nnf(path)
    assert p == 3
    np.testing.assert_array_equal(offsets, nnf.offsets)
