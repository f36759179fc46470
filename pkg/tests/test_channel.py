import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vblast.channel import (
    MAX_ANTENNAS,
    Modulation,
    NoiseModel,
    SystemDims,
    after_projection_norm,
    after_projection_snr,
    ber_conditional,
    complex_normal,
    orthonormal_basis,
    project_orthogonal,
    qfunc,
    sample_channel,
    sample_channels,
    stream_rng,
)


@pytest.mark.parametrize("n,m", [(2, 3), (0, 0), (17, 2), (3, 0)])
def test_dims_rejects_invalid(n, m):
    with pytest.raises(ValueError):
        SystemDims(n, m)


def test_dims_diversity_and_cap():
    assert SystemDims(4, 3).diversity == 2
    assert SystemDims(MAX_ANTENNAS, MAX_ANTENNAS).diversity == 1
    assert SystemDims(3, 1).diversity == 3


def test_noise_model_round_trip():
    nm = NoiseModel.from_db(10.0)
    assert nm.sigma0_sq == pytest.approx(0.1)
    assert nm.gamma0 == pytest.approx(10.0)
    with pytest.raises(ValueError):
        NoiseModel(0.0)


def test_stream_rng_is_addressable():
    a = stream_rng(5, 3).standard_normal(4)
    b = stream_rng(5, 3).standard_normal(4)
    c = stream_rng(5, 4).standard_normal(4)
    d = stream_rng(6, 3).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_complex_normal_moments():
    z = complex_normal(stream_rng(1), 200_000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(z)) < 0.01
    assert abs(np.mean(z * z)) < 0.01  # circular symmetry


def test_sample_shapes(rng):
    d = SystemDims(4, 3)
    assert sample_channel(d, rng).shape == (4, 3)
    assert sample_channels(d, 7, rng).shape == (7, 4, 3)


def test_projection_simple_geometry():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(project_orthogonal(v, [e1, e2]), [0, 0, 3])
    np.testing.assert_allclose(project_orthogonal(v, []), v)
    np.testing.assert_allclose(project_orthogonal(v, None), v)


def test_orthonormal_basis_drops_dependent_columns():
    a = np.array([1.0, 1j, 0])
    q = orthonormal_basis(np.column_stack([a, 2 * a, [0, 0, 1]]))
    assert q.shape == (3, 2)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(2), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_projection_idempotent_and_pythagorean(n, k, seed):
    k = min(k, n - 1)
    g = np.random.default_rng(seed)
    v = complex_normal(g, n)
    span = complex_normal(g, (n, k))
    p = project_orthogonal(v, span)
    np.testing.assert_allclose(project_orthogonal(p, span), p, atol=1e-10)
    # orthogonal to the span, and |v|^2 = |p|^2 + |v - p|^2
    assert np.max(np.abs(span.conj().T @ p), initial=0.0) < 1e-10
    lhs = np.vdot(v, v).real
    rhs = np.vdot(p, p).real + np.vdot(v - p, v - p).real
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_after_projection_norm_matches_gram_inverse(rng):
    H = complex_normal(rng, (5, 3))
    ginv = np.linalg.inv(H.conj().T @ H)
    for k in range(3):
        others = [j for j in range(3) if j != k]
        assert after_projection_norm(H, k, others) == pytest.approx(1 / ginv[k, k].real, rel=1e-10)
    assert after_projection_norm(H, 0) == pytest.approx(np.sum(np.abs(H[:, 0]) ** 2))
    assert after_projection_snr(H, 1, [0], NoiseModel(0.5)) == pytest.approx(2 * after_projection_norm(H, 1, [0]))
    with pytest.raises(ValueError):
        after_projection_norm(H, 0, [0])
    with pytest.raises(IndexError):
        after_projection_norm(H, 3)


def test_ber_conditional_values():
    assert ber_conditional(Modulation.BPSK, 0.0) == pytest.approx(0.5)
    assert ber_conditional(Modulation.BFSK, 0.0) == pytest.approx(0.5)
    g = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(ber_conditional("bpsk", g), qfunc(np.sqrt(2 * g)), rtol=1e-14)
    np.testing.assert_allclose(ber_conditional("bfsk", g), 0.5 * np.exp(-g / 2), rtol=1e-14)
    with pytest.raises(ValueError):
        ber_conditional("bpsk", -1.0)
