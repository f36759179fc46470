"""Channel primitives: Rayleigh sampling, orthogonal projections, conditional BER.

Indices are 0-based throughout the package. A channel matrix is a plain
``(n, m)`` complex ndarray; batches are ``(N, n, m)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

MAX_ANTENNAS = 16
_MASK64 = (1 << 64) - 1


class Modulation(str, enum.Enum):
    BPSK = "bpsk"
    BFSK = "bfsk"


@dataclass(frozen=True)
class SystemDims:
    """Receive (``n``) and transmit (``m``) antenna counts.

    ``m == 1`` is accepted as the degenerate single-stream (MRC) case; the
    ordering machinery itself needs ``m >= 2``.
    """

    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ValueError(f"antenna counts must be integers, got n={self.n}, m={self.m}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.n < self.m:
            raise ValueError(f"need n >= m, got n={self.n}, m={self.m}")
        if self.n > MAX_ANTENNAS:
            raise ValueError(f"n={self.n} exceeds the antenna cap {MAX_ANTENNAS}")

    @property
    def diversity(self) -> int:
        """First-step diversity order ``n - m + 1``."""
        return self.n - self.m + 1


@dataclass(frozen=True)
class NoiseModel:
    """AWGN with variance ``sigma0_sq`` per complex dimension."""

    sigma0_sq: float

    def __post_init__(self):
        if not self.sigma0_sq > 0:
            raise ValueError(f"noise variance must be positive, got {self.sigma0_sq}")

    @classmethod
    def from_gamma0(cls, gamma0: float) -> "NoiseModel":
        return cls(1.0 / gamma0)

    @classmethod
    def from_db(cls, gamma0_db: float) -> "NoiseModel":
        return cls.from_gamma0(10.0 ** (gamma0_db / 10.0))

    @property
    def gamma0(self) -> float:
        return 1.0 / self.sigma0_sq


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for logical stream ``stream`` of ``seed``.

    The Philox key packs ``(stream, seed)`` so every stream is independent
    and addressable without replaying earlier ones.
    """
    if stream < 0:
        raise ValueError("stream index must be non-negative")
    key = ((int(stream) & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def sample_channel(dims: SystemDims, rng: np.random.Generator) -> np.ndarray:
    """One i.i.d. Rayleigh realization, shape ``(n, m)``."""
    return complex_normal(rng, (dims.n, dims.m))


def sample_channels(dims: SystemDims, count: int, rng: np.random.Generator) -> np.ndarray:
    """A batch of ``count`` i.i.d. Rayleigh realizations, shape ``(count, n, m)``."""
    return complex_normal(rng, (count, dims.n, dims.m))


def _as_columns(span, length: int) -> np.ndarray:
    if span is None:
        return np.zeros((length, 0), dtype=complex)
    if isinstance(span, np.ndarray) and span.ndim == 2:
        cols = span.astype(complex, copy=False)
    else:
        span = list(span)
        if not span:
            return np.zeros((length, 0), dtype=complex)
        cols = np.column_stack([np.asarray(c, dtype=complex) for c in span])
    if cols.shape[0] != length:
        raise ValueError(f"span vectors have length {cols.shape[0]}, expected {length}")
    return cols


def orthonormal_basis(columns: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of ``span(columns)`` by modified Gram-Schmidt.

    Each column is orthogonalized twice against the accepted basis. A column
    whose residual norm falls below ``rtol`` times the largest input column
    norm is treated as linearly dependent and dropped.
    """
    columns = np.asarray(columns, dtype=complex)
    if columns.ndim != 2:
        raise ValueError("columns must be a 2-D array")
    length, k = columns.shape
    if k == 0:
        return np.zeros((length, 0), dtype=complex)
    scale = np.max(np.linalg.norm(columns, axis=0))
    if scale == 0:
        return np.zeros((length, 0), dtype=complex)
    basis = []
    for j in range(k):
        v = columns[:, j].copy()
        for _ in range(2):
            for q in basis:
                v -= np.vdot(q, v) * q
        norm = np.linalg.norm(v)
        if norm > rtol * scale:
            basis.append(v / norm)
    if not basis:
        return np.zeros((length, 0), dtype=complex)
    return np.column_stack(basis)


def project_orthogonal(v, span_columns=None) -> np.ndarray:
    """Component of ``v`` orthogonal to the span of ``span_columns``.

    ``span_columns`` is either an ``(len(v), k)`` array or a sequence of
    vectors; an empty span returns ``v`` unchanged.
    """
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError("v must be a vector")
    cols = _as_columns(span_columns, v.shape[0])
    if cols.shape[1] == 0:
        return v.copy()
    q = orthonormal_basis(cols)
    out = v.copy()
    # second pass keeps the result orthogonal when v is nearly in the span
    for _ in range(2):
        out -= q @ (q.conj().T @ out)
    return out


def after_projection_norm(H: np.ndarray, column: int, excluded=()) -> float:
    """Normalized power ``x = |h_perp|^2`` of column ``column``.

    ``excluded`` holds the indices of the yet-to-be-detected columns that
    are nulled by the projection.
    """
    H = np.asarray(H)
    m = H.shape[1]
    excluded = [int(e) for e in excluded]
    if not 0 <= column < m or any(not 0 <= e < m for e in excluded):
        raise IndexError(f"column index out of range for a {H.shape} channel")
    if column in excluded:
        raise ValueError("the detected column cannot be in its own nulling set")
    h_perp = project_orthogonal(H[:, column], H[:, excluded])
    return float(np.real(np.vdot(h_perp, h_perp)))


def after_projection_snr(H: np.ndarray, column: int, excluded, noise: NoiseModel) -> float:
    """After-processing SNR ``|h_perp|^2 / sigma0^2`` with optimum ZF weights."""
    return after_projection_norm(H, column, excluded) * noise.gamma0


def qfunc(z):
    """Gaussian tail probability Q(z)."""
    return 0.5 * special.erfc(np.asarray(z, dtype=float) / np.sqrt(2.0))


def ber_conditional(mod: Modulation, gamma):
    """Bit error probability of ``mod`` at instantaneous SNR ``gamma``.

    BPSK: ``Q(sqrt(2 gamma))``; non-coherent orthogonal BFSK: ``exp(-gamma/2)/2``.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise ValueError("SNR must be non-negative")
    mod = Modulation(mod)
    if mod is Modulation.BPSK:
        out = 0.5 * special.erfc(np.sqrt(g))
    else:
        out = 0.5 * np.exp(-0.5 * g)
    return out if out.ndim else float(out)
