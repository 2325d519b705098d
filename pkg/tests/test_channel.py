"""Channel generation and transmission contracts."""

import numpy as np
import pytest

from pvdmimo.channel import (
    MimoDims,
    BlockFadingChannel,
    complex_normal,
    compound,
    draw_kronecker_correlated,
    draw_rayleigh,
    transmit,
)


def test_dims_validation():
    with pytest.raises(ValueError):
        MimoDims(N_r=0, N_t=1, K=1, T=1)
    with pytest.raises(ValueError):
        MimoDims(N_r=1, N_t=1, K=1, T=1, P=0.0)
    with pytest.raises(ValueError):
        MimoDims(N_r=1, N_t=1, K=1, T=1, sigma_n2=-1.0)
    d = MimoDims(N_r=2, N_t=3, K=4, T=5, N_u=2, n=7)
    assert d.signal_shape == (12, 5)
    assert d.output_shape == (8, 5)
    assert d.channel_entries == 24


def test_rayleigh_shapes():
    dims = MimoDims(N_r=2, N_t=1, K=2, T=4)
    chans = draw_rayleigh(dims, np.random.default_rng(0))
    assert len(chans) == 1
    assert chans[0].blocks.shape == (2, 2, 1)


def test_rayleigh_determinism():
    dims = MimoDims(N_r=3, N_t=2, K=2, T=4, N_u=2)
    a = draw_rayleigh(dims, np.random.default_rng(42))
    b = draw_rayleigh(dims, np.random.default_rng(42))
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.blocks, cb.blocks)


def test_rayleigh_unit_variance():
    # 10^5 CN(0,1) samples: per-entry variance within 1.0 +- 0.02
    dims = MimoDims(N_r=10, N_t=10, K=10, T=1)
    chans = draw_rayleigh(MimoDims(N_r=10, N_t=10, K=100, T=1), np.random.default_rng(7))
    samples = chans[0].blocks.ravel()
    assert samples.size == 10_000
    more = draw_rayleigh(dims, np.random.default_rng(8))[0].blocks.ravel()
    all_samples = np.concatenate([samples] + [
        draw_rayleigh(dims, np.random.default_rng(9 + k))[0].blocks.ravel()
        for k in range(89)
    ] + [more])
    assert all_samples.size >= 100_000
    var = np.mean(np.abs(all_samples) ** 2)
    assert abs(var - 1.0) < 0.02
    # circular symmetry: real/imag each close to 1/2
    assert abs(np.var(all_samples.real) - 0.5) < 0.02


def test_kronecker_identity_matches_rayleigh():
    dims = MimoDims(N_r=3, N_t=2, K=2, T=4)
    eye_r = np.eye(3)
    eye_t = np.eye(2)
    a = draw_rayleigh(dims, np.random.default_rng(5))
    b = draw_kronecker_correlated(dims, eye_r, eye_t, np.random.default_rng(5))
    assert np.array_equal(a[0].blocks, b[0].blocks)


def test_kronecker_zero_covariance():
    dims = MimoDims(N_r=2, N_t=2, K=3, T=4)
    chans = draw_kronecker_correlated(dims, np.zeros((2, 2)), np.eye(2),
                                      np.random.default_rng(0))
    assert np.all(chans[0].blocks == 0)


def test_kronecker_rank1_columns_align():
    # rank-1 R_tx: every sampled channel column space lies along the eigenvector
    dims = MimoDims(N_r=2, N_t=2, K=1, T=1)
    v = np.array([1.0, 1.0j]) / np.sqrt(2)
    R_tx = np.outer(v, v.conj())
    rng = np.random.default_rng(11)
    for _ in range(1000):
        H = draw_kronecker_correlated(dims, np.eye(2), R_tx, rng)[0].blocks[0]
        # H = G R_tx^{1/2}: rows proportional to v^H, i.e. H @ (I - vv^H) = 0
        proj = H @ (np.eye(2) - np.outer(v, v.conj()))
        assert np.linalg.norm(proj) < 1e-10 * max(1.0, np.linalg.norm(H))


def test_kronecker_rejects_bad_covariance():
    dims = MimoDims(N_r=2, N_t=2, K=1, T=1)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        draw_kronecker_correlated(dims, np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2), rng)
    with pytest.raises(ValueError):
        draw_kronecker_correlated(dims, np.diag([1.0, -0.5]), np.eye(2), rng)


def test_compound_single_block():
    H = BlockFadingChannel(np.arange(6, dtype=complex).reshape(1, 2, 3))
    assert np.array_equal(compound(H), H.blocks[0])


def test_compound_scalar_blocks():
    H = BlockFadingChannel(np.array([[[2.0]], [[3.0]]], dtype=complex))
    assert np.array_equal(compound(H), np.diag([2.0 + 0j, 3.0 + 0j]))


def test_compound_structural_zeros():
    rng = np.random.default_rng(3)
    H = BlockFadingChannel(complex_normal(rng, (3, 2, 2)))
    H0 = compound(H)
    assert H0.shape == (6, 6)
    mask = np.ones((6, 6), dtype=bool)
    for k in range(3):
        mask[2 * k:2 * k + 2, 2 * k:2 * k + 2] = False
    assert np.all(H0[mask] == 0)


def test_transmit_identity_noiseless():
    blocks = np.stack([np.eye(2, dtype=complex)] * 3)
    ch = BlockFadingChannel(blocks)
    X = complex_normal(np.random.default_rng(0), (6, 5))
    Y = transmit([ch], [X], 0.0, np.random.default_rng(1))
    assert np.allclose(Y, X)


def test_transmit_scalar():
    ch = BlockFadingChannel(np.array([[[2.0]]], dtype=complex))
    Y = transmit([ch], [np.array([[3.0 + 0j]])], 0.0, np.random.default_rng(0))
    assert Y.shape == (1, 1) and Y[0, 0] == 6.0


def test_transmit_two_user_superposition():
    c1 = BlockFadingChannel(np.array([[[1.0]]], dtype=complex))
    c2 = BlockFadingChannel(np.array([[[2.0]]], dtype=complex))
    x = np.array([[1.0 + 0j]])
    Y = transmit([c1, c2], [x, x], 0.0, np.random.default_rng(0))
    assert Y[0, 0] == 3.0


def test_transmit_shape_errors():
    ch = BlockFadingChannel(np.ones((1, 2, 2), dtype=complex))
    with pytest.raises(ValueError):
        transmit([ch], [np.ones((3, 4), dtype=complex)], 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        transmit([ch, ch], [np.ones((2, 4), dtype=complex)], 0.0, np.random.default_rng(0))


def test_block_locality():
    # zeroing signal rows outside block k leaves Y rows outside block k unchanged
    rng = np.random.default_rng(9)
    dims = MimoDims(N_r=2, N_t=2, K=3, T=4)
    ch = draw_rayleigh(dims, rng)[0]
    X = complex_normal(rng, dims.signal_shape)
    Y_full = transmit([ch], [X], 0.0, np.random.default_rng(0))
    X_k = np.zeros_like(X)
    X_k[2:4] = X[2:4]  # block k=1 only
    Y_k = transmit([ch], [X_k], 0.0, np.random.default_rng(0))
    assert np.allclose(Y_k[2:4], Y_full[2:4])
    assert np.all(Y_k[:2] == 0) and np.all(Y_k[4:] == 0)


def test_transmit_linearity():
    rng = np.random.default_rng(10)
    dims = MimoDims(N_r=2, N_t=1, K=2, T=3)
    ch = draw_rayleigh(dims, rng)[0]
    X1 = complex_normal(rng, dims.signal_shape)
    X2 = complex_normal(rng, dims.signal_shape)
    a, b = 2.0 - 1.0j, 0.5 + 0.25j
    lhs = transmit([ch], [a * X1 + b * X2], 0.0, np.random.default_rng(0))
    rhs = (a * transmit([ch], [X1], 0.0, np.random.default_rng(0))
           + b * transmit([ch], [X2], 0.0, np.random.default_rng(0)))
    assert np.allclose(lhs, rhs)


def test_noise_statistics():
    # X = 0: per-entry variance of Y equals sigma_n2 within 3% over 1e5 samples
    dims = MimoDims(N_r=10, N_t=1, K=10, T=1000)
    ch = BlockFadingChannel(np.zeros((10, 10, 1), dtype=complex))
    Y = transmit([ch], [np.zeros(dims.signal_shape, dtype=complex)], 0.7,
                 np.random.default_rng(123))
    assert Y.size == 100_000
    assert abs(np.mean(np.abs(Y) ** 2) - 0.7) < 0.03 * 0.7


def test_transmit_determinism():
    dims = MimoDims(N_r=2, N_t=1, K=2, T=3)
    ch = draw_rayleigh(dims, np.random.default_rng(1))[0]
    X = complex_normal(np.random.default_rng(2), dims.signal_shape)
    Y1 = transmit([ch], [X], 0.5, np.random.default_rng(77))
    Y2 = transmit([ch], [X], 0.5, np.random.default_rng(77))
    assert np.array_equal(Y1, Y2)
