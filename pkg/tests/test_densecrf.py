"""Mean-field relabelling: hand oracles, exhaustive search, fast-path parity."""

import itertools
import math

import numpy as np
import pytest

from weakpanoptic.densecrf import (
    PairwiseConfig,
    brute_force_map,
    default_window_radius,
    energy,
    energy_given_kernel,
    init_marginals,
    kernel_matrix,
    map_labeling,
    meanfield_step,
    meanfield_step_given_kernel,
    run_meanfield,
)
from weakpanoptic.errors import TooLargeError


def _scalar_energy(flat_labels, flat_unary, kernel):
    """Independent double-loop energy: unaries plus disagreement affinities."""
    total = 0.0
    n = len(flat_labels)
    for i in range(n):
        total += flat_unary[i][flat_labels[i]]
    for i in range(n):
        for j in range(i + 1, n):
            if flat_labels[i] != flat_labels[j]:
                total += kernel[i][j]
    return total


def test_config_validation():
    with pytest.raises(ValueError):
        PairwiseConfig(w_gaussian=-1.0)
    with pytest.raises(ValueError):
        PairwiseConfig(theta_beta=0.0)
    cfg = PairwiseConfig()
    assert cfg.w_gaussian == 3.0 and cfg.theta_gamma == 3.0
    assert cfg.w_bilateral == 10.0 and cfg.theta_alpha == 60.0 and cfg.theta_beta == 10.0


def test_default_window_radius_tracks_widest_kernel():
    assert default_window_radius(PairwiseConfig()) == math.ceil(3 * 60.0)
    assert default_window_radius(PairwiseConfig(w_bilateral=0.0)) == 9
    assert default_window_radius(PairwiseConfig(w_gaussian=0.0, theta_alpha=2.0)) == 6


def test_init_marginals_matches_scalar_softmax():
    unary = np.array([[[1.0, 2.0], [0.5, 0.0]]])
    q = init_marginals(unary)
    assert q.shape == (1, 2, 2)
    z0 = math.exp(-1.0) + math.exp(-2.0)
    assert q[0, 0, 0] == pytest.approx(math.exp(-1.0) / z0, abs=1e-12)
    assert q[0, 0, 1] == pytest.approx(math.exp(-2.0) / z0, abs=1e-12)
    np.testing.assert_allclose(q.sum(axis=-1), 1.0, atol=1e-12)


def test_init_marginals_uniform_for_constant_unary():
    q = init_marginals(np.full((3, 4, 5), 7.25))
    np.testing.assert_allclose(q, 0.2, atol=1e-12)


def test_map_labeling_prefers_lowest_on_ties():
    q = np.array([[[0.4, 0.4, 0.2], [0.1, 0.45, 0.45]]])
    lab = map_labeling(q)
    assert lab[0, 0] == 0 and lab[0, 1] == 1


def test_kernel_matrix_spot_values():
    image = np.zeros((1, 2, 3), dtype=np.uint8)
    image[0, 1] = (10, 0, 0)
    cfg = PairwiseConfig(w_gaussian=2.0, theta_gamma=1.5, w_bilateral=4.0,
                         theta_alpha=3.0, theta_beta=5.0)
    k = kernel_matrix(image, cfg)
    assert k.shape == (2, 2)
    assert k[0, 0] == 0.0 and k[1, 1] == 0.0
    expected = 2.0 * math.exp(-1.0 / (2 * 1.5**2)) + 4.0 * math.exp(
        -1.0 / (2 * 3.0**2) - 100.0 / (2 * 5.0**2)
    )
    assert k[0, 1] == pytest.approx(expected, rel=1e-12)
    assert k[1, 0] == pytest.approx(expected, rel=1e-12)


def test_kernel_matrix_symmetric_nonnegative():
    rng = np.random.default_rng(3)
    image = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
    k = kernel_matrix(image, PairwiseConfig())
    np.testing.assert_allclose(k, k.T, atol=1e-12)
    assert (k >= 0).all()
    assert np.diag(k).max() == 0.0


def test_step_matches_scalar_arithmetic():
    unary = np.array([[[1.0, 2.0], [0.5, 0.0]]])
    kernel = np.array([[0.0, 0.7], [0.7, 0.0]])
    q0 = init_marginals(unary)
    q1 = meanfield_step_given_kernel(q0, unary, kernel)

    def softmax2(a, b):
        za = math.exp(-a)
        zb = math.exp(-b)
        return za / (za + zb), zb / (za + zb)

    p0 = softmax2(1.0, 2.0)
    p1 = softmax2(0.5, 0.0)
    m0 = (0.7 * (1 - p1[0]), 0.7 * (1 - p1[1]))
    m1 = (0.7 * (1 - p0[0]), 0.7 * (1 - p0[1]))
    e0 = softmax2(1.0 + m0[0], 2.0 + m0[1])
    e1 = softmax2(0.5 + m1[0], 0.0 + m1[1])
    np.testing.assert_allclose(q1[0, 0], e0, atol=1e-12)
    np.testing.assert_allclose(q1[0, 1], e1, atol=1e-12)


def test_step_is_synchronous():
    """Messages come from the pre-update field, so pixel order cannot matter:
    flipping the image left-right and flipping back must commute."""
    rng = np.random.default_rng(11)
    unary = rng.normal(size=(3, 4, 3))
    image = rng.integers(0, 256, size=(3, 4, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=5.0)
    q = init_marginals(unary)
    a = meanfield_step(q, unary, image, cfg, method="exact")
    b = meanfield_step(q[:, ::-1], unary[:, ::-1], image[:, ::-1], cfg, method="exact")
    np.testing.assert_allclose(a, b[:, ::-1], atol=1e-12)


def test_zero_weights_fix_point_at_unary_softmax():
    rng = np.random.default_rng(5)
    unary = rng.normal(size=(4, 4, 3))
    image = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    cfg = PairwiseConfig(w_gaussian=0.0, w_bilateral=0.0)
    q = run_meanfield(unary, image, cfg, iters=5, method="exact")
    np.testing.assert_array_equal(q, init_marginals(unary))


def test_run_meanfield_zero_iters_returns_init():
    rng = np.random.default_rng(8)
    unary = rng.normal(size=(2, 3, 4))
    image = rng.integers(0, 256, size=(2, 3, 3), dtype=np.uint8)
    q = run_meanfield(unary, image, PairwiseConfig(), iters=0)
    np.testing.assert_array_equal(q, init_marginals(unary))


def test_run_meanfield_label_permutation_equivariant():
    rng = np.random.default_rng(21)
    unary = rng.normal(size=(4, 4, 4))
    image = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=6.0)
    perm = np.array([2, 0, 3, 1])
    q = run_meanfield(unary, image, cfg, iters=4, method="exact")
    qp = run_meanfield(unary[..., perm], image, cfg, iters=4, method="exact")
    np.testing.assert_allclose(qp, q[..., perm], atol=1e-10)


def test_meanfield_smooths_salt_noise():
    rng = np.random.default_rng(2)
    h = w = 8
    image = np.zeros((h, w, 3), dtype=np.uint8)
    image[:, : w // 2] = (200, 30, 30)
    image[:, w // 2 :] = (30, 30, 200)
    truth = np.zeros((h, w), dtype=np.int64)
    truth[:, w // 2 :] = 1
    unary = np.zeros((h, w, 2))
    unary[truth == 0, 0] = -1.5
    unary[truth == 0, 1] = 1.5
    unary[truth == 1, 0] = 1.5
    unary[truth == 1, 1] = -1.5
    flips = [(1, 1), (5, 2), (3, 6), (6, 5)]
    for y, x in flips:
        unary[y, x] = unary[y, x, ::-1]
    cfg = PairwiseConfig(w_gaussian=1.0, theta_gamma=1.5, w_bilateral=3.0,
                         theta_alpha=10.0, theta_beta=20.0)
    before = map_labeling(init_marginals(unary))
    assert (before != truth).sum() == len(flips)
    after = map_labeling(run_meanfield(unary, image, cfg, iters=5, method="exact"))
    np.testing.assert_array_equal(after, truth)


def test_energy_matches_scalar_loop():
    rng = np.random.default_rng(4)
    unary = rng.normal(size=(2, 3, 3))
    image = rng.integers(0, 256, size=(2, 3, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=4.0)
    kernel = kernel_matrix(image, cfg)
    labels = rng.integers(0, 3, size=(2, 3))
    got = energy(labels, unary, image, cfg)
    want = _scalar_energy(labels.ravel().tolist(), unary.reshape(6, 3).tolist(),
                          kernel.tolist())
    assert got == pytest.approx(want, rel=1e-12)


def test_energy_uniform_labeling_has_no_pairwise_term():
    rng = np.random.default_rng(6)
    unary = rng.normal(size=(3, 3, 2))
    image = rng.integers(0, 256, size=(3, 3, 3), dtype=np.uint8)
    labels = np.ones((3, 3), dtype=np.int64)
    got = energy(labels, unary, image, PairwiseConfig())
    assert got == pytest.approx(float(unary[..., 1].sum()), rel=1e-12)


def test_energy_rejects_bad_labels():
    unary = np.zeros((2, 2, 2))
    image = np.zeros((2, 2, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        energy(np.full((2, 2), 2), unary, image, PairwiseConfig())


def test_brute_force_map_matches_enumeration():
    rng = np.random.default_rng(9)
    unary = rng.normal(size=(1, 3, 2))
    image = rng.integers(0, 256, size=(1, 3, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=3.0, theta_beta=30.0)
    kernel = kernel_matrix(image, cfg).tolist()
    flat_unary = unary.reshape(3, 2).tolist()
    best_energy = None
    best = None
    for cand in itertools.product(range(2), repeat=3):
        e = _scalar_energy(list(cand), flat_unary, kernel)
        if best_energy is None or e < best_energy - 1e-15:
            best_energy, best = e, cand
    got = brute_force_map(unary, image, cfg)
    assert tuple(got.ravel().tolist()) == best
    assert energy(got, unary, image, cfg) == pytest.approx(best_energy, rel=1e-12)


def test_brute_force_map_tie_breaks_lexicographically():
    unary = np.zeros((1, 2, 2))
    image = np.zeros((1, 2, 3), dtype=np.uint8)
    got = brute_force_map(unary, image, PairwiseConfig())
    np.testing.assert_array_equal(got, np.zeros((1, 2), dtype=np.int64))


def test_brute_force_map_rejects_large_instances():
    unary = np.zeros((8, 8, 4))
    image = np.zeros((8, 8, 3), dtype=np.uint8)
    with pytest.raises(TooLargeError):
        brute_force_map(unary, image, PairwiseConfig())


def test_fast_full_window_matches_exact():
    """With the window covering the whole image the only difference left is
    float32 accumulation."""
    rng = np.random.default_rng(13)
    h = w = 10
    unary = rng.normal(size=(h, w, 3))
    image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    cfg = PairwiseConfig(w_gaussian=2.0, theta_gamma=2.0, w_bilateral=5.0,
                         theta_alpha=50.0, theta_beta=12.0)
    q_exact = run_meanfield(unary, image, cfg, iters=3, method="exact")
    q_fast = run_meanfield(unary, image, cfg, iters=3, method="fast", window_radius=50)
    assert np.abs(q_exact - q_fast).max() < 1e-4


def test_fast_truncated_window_stays_close_to_exact():
    rng = np.random.default_rng(17)
    h = w = 16
    unary = rng.normal(size=(h, w, 2))
    image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    cfg = PairwiseConfig(w_gaussian=3.0, theta_gamma=2.0, w_bilateral=10.0,
                         theta_alpha=3.0, theta_beta=10.0)
    radius = math.ceil(5 * 3.0)
    q_exact = run_meanfield(unary, image, cfg, iters=5, method="exact")
    q_fast = run_meanfield(unary, image, cfg, iters=5, method="fast",
                           window_radius=radius)
    assert np.abs(q_exact - q_fast).max() < 1e-3


def test_single_step_fast_matches_exact_full_window():
    rng = np.random.default_rng(19)
    unary = rng.normal(size=(6, 6, 3))
    image = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=8.0)
    q = init_marginals(unary)
    a = meanfield_step(q, unary, image, cfg, method="exact")
    b = meanfield_step(q, unary, image, cfg, method="fast", window_radius=12)
    assert np.abs(a - b).max() < 1e-4


def test_auto_method_small_image_equals_exact():
    rng = np.random.default_rng(23)
    unary = rng.normal(size=(5, 5, 2))
    image = rng.integers(0, 256, size=(5, 5, 3), dtype=np.uint8)
    cfg = PairwiseConfig(theta_alpha=4.0)
    np.testing.assert_array_equal(
        run_meanfield(unary, image, cfg, iters=3, method="auto"),
        run_meanfield(unary, image, cfg, iters=3, method="exact"),
    )


def test_marginals_remain_normalized():
    rng = np.random.default_rng(29)
    for trial in range(5):
        unary = rng.normal(size=(6, 6, 4)) * 2.0
        image = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        q = run_meanfield(unary, image, PairwiseConfig(theta_alpha=5.0),
                          iters=4, method="exact")
        np.testing.assert_allclose(q.sum(axis=-1), 1.0, atol=1e-9)
        assert (q >= 0).all() and (q <= 1).all()


def test_unary_validation():
    image = np.zeros((2, 2, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        run_meanfield(np.zeros((2, 2)), image, PairwiseConfig())
    bad = np.zeros((2, 2, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        run_meanfield(bad, image, PairwiseConfig())
    with pytest.raises(ValueError):
        run_meanfield(np.zeros((2, 2, 2)), image, PairwiseConfig(), method="nope")
