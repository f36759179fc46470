"""ZF-SIC (V-BLAST), linear ZF/MMSE and D-BLAST symbol-cycling detectors.

These are per-realization reference detectors. The Monte-Carlo engine has
batched equivalents that are checked against them in the tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import Modulation, NoiseModel, complex_normal, project_orthogonal

_RANK_RTOL = 1e-12


class RankDeficientChannel(ValueError):
    """Raised when a channel matrix cannot separate all transmit streams."""


class OrderingStrategy(str, enum.Enum):
    OPTIMAL = "optimal"
    SUBOPTIMAL = "suboptimal"
    NONE = "none"


class ReceiverKind(str, enum.Enum):
    ZF_SIC = "zf-sic"
    LINEAR_ZF = "linear-zf"
    LINEAR_MMSE = "linear-mmse"
    DBLAST = "dblast-cycled"


@dataclass
class DetectionResult:
    """Outcome of detecting one transmit vector.

    ``order``, ``step_snr``, ``step_norm`` and ``step_errors`` are indexed by
    detection step; ``detected_bits`` is indexed by transmit stream.
    """

    order: np.ndarray
    step_snr: np.ndarray
    step_norm: np.ndarray
    detected_bits: np.ndarray
    step_errors: np.ndarray

    @property
    def block_error(self) -> bool:
        return bool(np.any(self.step_errors))

    @property
    def bit_errors(self) -> int:
        return int(np.count_nonzero(self.step_errors))


def modulate(bits, mod: Modulation) -> np.ndarray:
    """Map bits to transmit symbols.

    BPSK gives ``+1`` for bit 0 and ``-1`` for bit 1. BFSK gives a one-hot
    ``(m, 2)`` tone matrix.
    """
    bits = np.asarray(bits, dtype=np.int8)
    if Modulation(mod) is Modulation.BPSK:
        return 1.0 - 2.0 * bits
    return np.stack([bits == 0, bits == 1], axis=-1).astype(float)


def transmit(H: np.ndarray, bits, mod: Modulation, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Received signal ``r = H s + xi``: shape ``(n,)`` for BPSK, ``(n, 2)`` for BFSK."""
    s = modulate(bits, mod)
    clean = H @ s
    xi = complex_normal(rng, clean.shape) * np.sqrt(noise.sigma0_sq)
    return clean + xi


def _decide(y, mod: Modulation) -> int:
    if mod is Modulation.BPSK:
        return int(np.real(y) < 0)
    return int(abs(y[1]) ** 2 > abs(y[0]) ** 2)


def _check_shapes(H, r, tx_bits, mod):
    H = np.asarray(H, dtype=complex)
    r = np.asarray(r, dtype=complex)
    n, m = H.shape
    want = (n,) if mod is Modulation.BPSK else (n, 2)
    if r.shape != want:
        raise ValueError(f"received signal has shape {r.shape}, expected {want}")
    tx_bits = np.asarray(tx_bits, dtype=np.int8)
    if tx_bits.shape != (m,):
        raise ValueError(f"expected {m} reference bits, got shape {tx_bits.shape}")
    return H, r, tx_bits


def choose_order(H: np.ndarray, strategy: OrderingStrategy):
    """Detection order and the per-step normalized powers ``x_i``.

    Returns ``(order, x)`` where ``x[i]`` is the power of column ``order[i]``
    after projecting out the columns detected later. Ties go to the lowest
    column index.
    """
    H = np.asarray(H, dtype=complex)
    strategy = OrderingStrategy(strategy)
    m = H.shape[1]
    scale = float(np.max(np.sum(np.abs(H) ** 2, axis=0)))
    if scale == 0:
        raise RankDeficientChannel("all-zero channel")

    if strategy is OrderingStrategy.OPTIMAL:
        remaining = list(range(m))
        order = []
        for _ in range(m):
            powers = []
            for k in remaining:
                others = [j for j in remaining if j != k]
                h = project_orthogonal(H[:, k], H[:, others])
                powers.append(np.real(np.vdot(h, h)))
            best = int(np.argmax(powers))
            order.append(remaining.pop(best))
    elif strategy is OrderingStrategy.SUBOPTIMAL:
        norms = np.sum(np.abs(H) ** 2, axis=0)
        order = list(np.argsort(-norms, kind="stable"))
    else:
        order = list(range(m))

    order = np.asarray(order, dtype=int)
    x = np.empty(m)
    for i, k in enumerate(order):
        h = project_orthogonal(H[:, k], H[:, order[i + 1:]])
        x[i] = np.real(np.vdot(h, h))
    if np.min(x) <= _RANK_RTOL * scale:
        raise RankDeficientChannel("channel columns are linearly dependent")
    return order, x


def zf_sic_detect(H, r, strategy: OrderingStrategy, mod: Modulation, noise: NoiseModel, tx_bits) -> DetectionResult:
    """Zero-forcing successive interference cancellation.

    At every step the weight is the projection of the current column
    orthogonal to the not-yet-detected columns, scaled for unit gain. The
    decided symbol, right or wrong, is then subtracted from the residual.
    """
    mod = Modulation(mod)
    H, r, tx_bits = _check_shapes(H, r, tx_bits, mod)
    order, x = choose_order(H, strategy)
    m = H.shape[1]

    residual = r.copy()
    detected = np.zeros(m, dtype=np.int8)
    for i, k in enumerate(order):
        h_perp = project_orthogonal(H[:, k], H[:, order[i + 1:]])
        w = h_perp / x[i]
        y = w.conj() @ residual
        detected[k] = _decide(y, mod)
        residual = residual - np.multiply.outer(H[:, k], modulate(detected[k:k + 1], mod)[0])

    return DetectionResult(
        order=order,
        step_snr=x * noise.gamma0,
        step_norm=x,
        detected_bits=detected,
        step_errors=detected[order] != tx_bits[order],
    )


def linear_detect(H, r, kind: ReceiverKind, mod: Modulation, noise: NoiseModel, tx_bits) -> DetectionResult:
    """Component-wise detection after a ZF or MMSE linear filter.

    For MMSE the recorded step SNR is the usual post-filter SINR and is only
    diagnostic.
    """
    mod = Modulation(mod)
    kind = ReceiverKind(kind)
    H, r, tx_bits = _check_shapes(H, r, tx_bits, mod)
    m = H.shape[1]
    G = H.conj().T @ H
    if kind is ReceiverKind.LINEAR_ZF:
        if np.linalg.cond(G) > 1e12:
            raise RankDeficientChannel("H^H H is singular")
        Ginv = np.linalg.inv(G)
        y = Ginv @ (H.conj().T @ r)
        x = 1.0 / np.real(np.diag(Ginv))
        snr = x * noise.gamma0
    elif kind is ReceiverKind.LINEAR_MMSE:
        y = np.linalg.solve(G + noise.sigma0_sq * np.eye(m), H.conj().T @ r)
        err_cov = np.linalg.inv(np.eye(m) + noise.gamma0 * G)
        snr = 1.0 / np.real(np.diag(err_cov)) - 1.0
        x = snr / noise.gamma0
    else:
        raise ValueError(f"{kind.value} is not a linear receiver")

    detected = np.array([_decide(y[k], mod) for k in range(m)], dtype=np.int8)
    return DetectionResult(
        order=np.arange(m),
        step_snr=snr,
        step_norm=x,
        detected_bits=detected,
        step_errors=detected != tx_bits,
    )


def cycle_map(t: int, m: int) -> np.ndarray:
    """Antenna index carrying each transmit stream at channel use ``t``."""
    return (np.arange(m) + t) % m


def cycled_channel(H: np.ndarray, t: int) -> np.ndarray:
    """Effective stream-to-receiver channel under D-BLAST symbol cycling."""
    return H[:, cycle_map(t, H.shape[1])]


def dblast_transmit(H, bits, t: int, mod: Modulation, noise: NoiseModel, rng) -> np.ndarray:
    return transmit(cycled_channel(H, t), bits, mod, noise, rng)


def dblast_cycle_detect(channels, received, strategy: OrderingStrategy, mod: Modulation, noise: NoiseModel, tx_bits):
    """ZF-SIC over a sequence of channel uses with cyclic stream rotation.

    ``channels`` is one ``(n, m)`` matrix reused for every use, or one matrix
    per use. Results are reported in stream indexing.
    """
    received = list(received)
    tx_bits = list(tx_bits)
    if len(received) != len(tx_bits):
        raise ValueError("received and tx_bits sequences differ in length")
    H0 = np.asarray(channels) if not isinstance(channels, (list, tuple)) else None
    if H0 is not None and H0.ndim == 2:
        channels = [H0] * len(received)
    channels = list(channels)
    if len(channels) != len(received):
        raise ValueError("one channel matrix per channel use is required")
    return [
        zf_sic_detect(cycled_channel(np.asarray(H), t), r, strategy, mod, noise, bits)
        for t, (H, r, bits) in enumerate(zip(channels, received, tx_bits))
    ]
