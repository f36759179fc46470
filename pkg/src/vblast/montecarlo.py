"""Monte-Carlo estimation of step outages, BLER and TBER.

Trials are grouped into fixed blocks of :data:`BLOCK` channel realizations;
block ``b`` draws from counter-based stream ``(seed, b)``. Per-block results
are integer counts (or float sums reduced in block order), so estimates do
not depend on the number of worker threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .channel import Modulation, SystemDims, ber_conditional, complex_normal, stream_rng
from .curves import EstimatedCurve, wilson_interval
from .receivers import OrderingStrategy, ReceiverKind

BLOCK = 1024
# blocks processed between auto-stop checks; fixed so stopping is reproducible
ROUND = 16
CI_Z = 1.959963984540054


class Estimator(str, enum.Enum):
    SYMBOL = "symbol-level"
    SEMI_ANALYTIC = "semi-analytic"


def _default_x_grid():
    return [float(v) for v in np.arange(-30.0, 10.0 + 1e-9, 2.5)]


class ExperimentConfig(BaseModel):
    """Everything that determines a Monte-Carlo run, seed included."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dims: SystemDims
    receiver: ReceiverKind = ReceiverKind.ZF_SIC
    ordering: OrderingStrategy = OrderingStrategy.OPTIMAL
    mod: Modulation = Modulation.BPSK
    snr_grid_db: list[float] = Field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    x_grid_db: list[float] = Field(default_factory=_default_x_grid)
    channel_trials: int = Field(default=10**6, ge=1)
    noise_trials_per_channel: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    estimator: Estimator = Estimator.SYMBOL
    auto_stop: bool = False
    ci_rel_target: float = Field(default=0.05, gt=0)

    @field_validator("snr_grid_db", "x_grid_db")
    @classmethod
    def _increasing(cls, v):
        if not v:
            raise ValueError("grid must be non-empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("grid must be strictly increasing")
        return v

    def replace(self, **changes) -> "ExperimentConfig":
        """Validated copy with ``changes`` applied."""
        return type(self).model_validate({**self.model_dump(), **changes})

    @property
    def x_grid(self) -> np.ndarray:
        return 10.0 ** (np.asarray(self.x_grid_db) / 10.0)

    @property
    def gamma0_grid(self) -> np.ndarray:
        return 10.0 ** (np.asarray(self.snr_grid_db) / 10.0)


# --------------------------------------------------------------------------
# batched geometry


def _gram_inv_diag(H):
    G = np.conj(np.swapaxes(H, -1, -2)) @ H
    return np.real(np.diagonal(np.linalg.inv(G), axis1=-2, axis2=-1))


def after_projection_powers(H: np.ndarray) -> np.ndarray:
    """Power of every column orthogonal to all other columns, shape ``(N, m)``."""
    if H.shape[-1] == 1:
        return np.sum(np.abs(H) ** 2, axis=-2)
    return 1.0 / _gram_inv_diag(H)


def batch_order(H: np.ndarray, strategy: OrderingStrategy) -> np.ndarray:
    """Detection order for every channel in a ``(N, n, m)`` batch."""
    N, _, m = H.shape
    strategy = OrderingStrategy(strategy)
    if strategy is OrderingStrategy.NONE:
        return np.tile(np.arange(m), (N, 1))
    if strategy is OrderingStrategy.SUBOPTIMAL:
        norms = np.sum(np.abs(H) ** 2, axis=1)
        return np.argsort(-norms, axis=1, kind="stable")
    rows = np.arange(N)
    remaining = np.tile(np.arange(m), (N, 1))
    order = np.empty((N, m), dtype=int)
    for i in range(m):
        Hr = np.take_along_axis(H, remaining[:, None, :], axis=2)
        # remaining stays sorted, so argmax ties resolve to the lowest index
        pick = np.argmax(after_projection_powers(Hr), axis=1)
        order[:, i] = remaining[rows, pick]
        keep = np.ones(remaining.shape, dtype=bool)
        keep[rows, pick] = False
        remaining = remaining[keep].reshape(N, m - i - 1)
    return order


def sic_factor(H: np.ndarray, order: np.ndarray):
    """QR factors of the ordered channel with columns reversed.

    Row ``j`` of ``R`` belongs to detection step ``m - 1 - j``; the returned
    ``x`` holds the per-step normalized powers ``|h_perp|^2`` in step order.
    """
    Hp = np.take_along_axis(H, order[:, None, :], axis=2)[..., ::-1]
    Q, R = np.linalg.qr(Hp)
    x = np.abs(np.diagonal(R, axis1=-2, axis2=-1)) ** 2
    return Q, R, x[:, ::-1]


def step_norms(H: np.ndarray, strategy: OrderingStrategy) -> np.ndarray:
    """Per-step normalized powers ``x_i`` for a batch, in detection order."""
    return sic_factor(H, batch_order(H, strategy))[2]


# --------------------------------------------------------------------------
# batched symbol-level detection


def _back_substitute(z, R, mod):
    """Decisions for ``z = R s + noise``; returns stream-reversed decisions."""
    N, T = z.shape[:2]
    m = R.shape[-1]
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    if mod == Modulation.BPSK:
        shat = np.empty((N, T, m))
        for j in range(m - 1, -1, -1):
            acc = z[..., j]
            if j < m - 1:
                acc = acc - np.einsum("nl,ntl->nt", R[:, j, j + 1:], shat[..., j + 1:])
            y = acc / diag[:, j][:, None]
            shat[..., j] = np.where(y.real < 0, -1.0, 1.0)
        return (shat < 0).astype(np.int8)
    # BFSK: z has a trailing tone axis
    bits = np.empty((N, T, m), dtype=np.int8)
    for j in range(m - 1, -1, -1):
        acc = z[..., j, :]
        if j < m - 1:
            tones = np.stack([bits[..., j + 1:] == 0, bits[..., j + 1:] == 1], axis=-1).astype(float)
            acc = acc - np.einsum("nl,ntlf->ntf", R[:, j, j + 1:], tones)
        y = acc / diag[:, j][:, None, None]
        bits[..., j] = np.abs(y[..., 1]) ** 2 > np.abs(y[..., 0]) ** 2
    return bits


def _symbols(bits, mod):
    if mod == Modulation.BPSK:
        return 1.0 - 2.0 * bits
    return np.stack([bits == 0, bits == 1], axis=-1).astype(float)


def _rotate_for_dblast(H, first_trial):
    N, _, m = H.shape
    t = first_trial + np.arange(N)
    idx = (np.arange(m)[None, :] + t[:, None]) % m
    return np.take_along_axis(H, idx[:, None, :], axis=2)


@dataclass
class _ErrorCounts:
    """Counts for one block across the SNR grid."""

    trials: int
    block: np.ndarray
    bits: np.ndarray
    step_err: np.ndarray
    step_trials: np.ndarray

    def __add__(self, other):
        return _ErrorCounts(
            self.trials + other.trials,
            self.block + other.block,
            self.bits + other.bits,
            self.step_err + other.step_err,
            self.step_trials + other.step_trials,
        )


def _symbol_block(cfg: ExperimentConfig, b: int, size: int) -> _ErrorCounts:
    dims, mod, kind = cfg.dims, cfg.mod, cfg.receiver
    T, m, n = cfg.noise_trials_per_channel, dims.m, dims.n
    rng = stream_rng(cfg.seed, b)
    H = complex_normal(rng, (size, n, m))
    bits = rng.integers(0, 2, size=(size, T, m), dtype=np.int8)
    noise_shape = (size, T, n) if mod == Modulation.BPSK else (size, T, n, 2)
    xi = complex_normal(rng, noise_shape)

    if kind == ReceiverKind.DBLAST:
        H = _rotate_for_dblast(H, b * BLOCK)
    s = _symbols(bits, mod)
    G = len(cfg.snr_grid_db)
    counts = _ErrorCounts(size * T, np.zeros(G, np.int64), np.zeros(G, np.int64),
                          np.zeros((G, m), np.int64), np.zeros((G, m), np.int64))

    if kind in (ReceiverKind.ZF_SIC, ReceiverKind.DBLAST):
        order = batch_order(H, cfg.ordering)
        Q, R, _ = sic_factor(H, order)
        perm = order[:, ::-1]
        if mod == Modulation.BPSK:
            s_rev = np.take_along_axis(s, perm[:, None, :], axis=2)
            clean = np.einsum("nij,ntj->nti", R, s_rev)
            w = np.einsum("nij,nti->ntj", Q.conj(), xi)
        else:
            s_rev = np.take_along_axis(s, perm[:, None, :, None], axis=2)
            clean = np.einsum("nij,ntjf->ntif", R, s_rev)
            w = np.einsum("nij,ntif->ntjf", Q.conj(), xi)
        bits_rev = np.take_along_axis(bits, perm[:, None, :], axis=2)
        for g, g0 in enumerate(cfg.gamma0_grid):
            dec = _back_substitute(clean + w / math.sqrt(g0), R, mod)
            _tally(counts, g, (dec != bits_rev)[..., ::-1], conditional=True)
    else:
        Hh = np.conj(np.swapaxes(H, 1, 2))
        Gm = Hh @ H
        if mod == Modulation.BPSK:
            r0 = np.einsum("nij,ntj->nti", H, s)
        else:
            r0 = np.einsum("nij,ntjf->ntif", H, s)
        for g, g0 in enumerate(cfg.gamma0_grid):
            sigma2 = 1.0 / g0
            reg = np.zeros(m) if kind == ReceiverKind.LINEAR_ZF else sigma2
            W = np.linalg.solve(Gm + reg * np.eye(m), Hh)
            r = r0 + xi * math.sqrt(sigma2)
            if mod == Modulation.BPSK:
                y = np.einsum("nij,ntj->nti", W, r)
                dec = (y.real < 0).astype(np.int8)
            else:
                y = np.einsum("nij,ntjf->ntif", W, r)
                dec = (np.abs(y[..., 1]) ** 2 > np.abs(y[..., 0]) ** 2).astype(np.int8)
            _tally(counts, g, dec != bits, conditional=False)
    return counts


def _tally(counts: _ErrorCounts, g: int, err: np.ndarray, conditional: bool):
    """Accumulate one SNR point; ``err`` is ``(N, T, m)`` in step order."""
    m = err.shape[-1]
    counts.block[g] += int(np.count_nonzero(err.any(axis=-1)))
    counts.bits[g] += int(np.count_nonzero(err))
    if conditional:
        clean_before = np.ones(err.shape[:2], dtype=bool)
        for i in range(m):
            counts.step_trials[g, i] += int(np.count_nonzero(clean_before))
            counts.step_err[g, i] += int(np.count_nonzero(err[..., i] & clean_before))
            clean_before &= ~err[..., i]
    else:
        counts.step_trials[g] += err.shape[0] * err.shape[1]
        counts.step_err[g] += np.count_nonzero(err, axis=(0, 1))


@dataclass
class _SemiSums:
    trials: int
    bler: np.ndarray
    bler_sq: np.ndarray
    step: np.ndarray
    step_sq: np.ndarray

    def __add__(self, other):
        return _SemiSums(self.trials + other.trials, self.bler + other.bler, self.bler_sq + other.bler_sq,
                         self.step + other.step, self.step_sq + other.step_sq)


def _semi_block(cfg: ExperimentConfig, b: int, size: int) -> _SemiSums:
    dims = cfg.dims
    rng = stream_rng(cfg.seed, b)
    H = complex_normal(rng, (size, dims.n, dims.m))
    if cfg.receiver == ReceiverKind.DBLAST:
        H = _rotate_for_dblast(H, b * BLOCK)
    x = step_norms(H, cfg.ordering)
    G = len(cfg.snr_grid_db)
    out = _SemiSums(size, np.zeros(G), np.zeros(G), np.zeros((G, dims.m)), np.zeros((G, dims.m)))
    for g, g0 in enumerate(cfg.gamma0_grid):
        pe = ber_conditional(cfg.mod, x * g0)
        pb = 1.0 - np.prod(1.0 - pe, axis=1)
        out.bler[g] = pb.sum()
        out.bler_sq[g] = (pb ** 2).sum()
        out.step[g] = pe.sum(axis=0)
        out.step_sq[g] = (pe ** 2).sum(axis=0)
    return out


# --------------------------------------------------------------------------
# block runner


def _block_sizes(total: int):
    full, rest = divmod(total, BLOCK)
    sizes = [BLOCK] * full
    if rest:
        sizes.append(rest)
    return sizes


def _run_blocks(fn, total: int, threads: int = 1, should_stop=None):
    """Reduce ``fn(b, size)`` over all blocks in block order.

    ``should_stop(acc)`` is consulted after every :data:`ROUND` blocks.
    """
    sizes = _block_sizes(total)
    acc = None
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for start in range(0, len(sizes), ROUND):
            chunk = range(start, min(start + ROUND, len(sizes)))
            for part in pool.map(lambda b: fn(b, sizes[b]), chunk):
                acc = part if acc is None else acc + part
            if should_stop is not None and start + ROUND < len(sizes) and should_stop(acc):
                break
    return acc


def _ci_small_enough(events, trials, rel):
    lo, hi = wilson_interval(events, trials)
    p = np.asarray(events) / np.maximum(trials, 1)
    return bool(np.all((p > 0) & ((hi - lo) / 2 <= rel * p)))


# --------------------------------------------------------------------------
# public estimators


def sample_step_norms(cfg: ExperimentConfig, threads: int = 1) -> np.ndarray:
    """Per-step normalized powers for every channel trial, shape ``(trials, m)``.

    For linear ZF the columns are per-stream powers instead of steps.
    """
    dims = cfg.dims

    def block(b, size):
        H = complex_normal(stream_rng(cfg.seed, b), (size, dims.n, dims.m))
        if cfg.receiver == ReceiverKind.DBLAST:
            H = _rotate_for_dblast(H, b * BLOCK)
        if cfg.receiver == ReceiverKind.LINEAR_ZF:
            return [after_projection_powers(H)]
        return [step_norms(H, cfg.ordering)]

    parts = _run_blocks(block, cfg.channel_trials, threads)
    return np.concatenate(parts, axis=0)


def estimate_step_outage(cfg: ExperimentConfig, threads: int = 1) -> list[EstimatedCurve]:
    """Empirical outage ``P{x_i <= x}`` per detection step on ``cfg.x_grid``.

    Pure channel geometry: steps after the first assume correct cancellation.
    """
    if cfg.receiver == ReceiverKind.LINEAR_MMSE:
        raise ValueError("MMSE output SINR depends on gamma0; outage in normalized SNR is undefined")
    dims, grid = cfg.dims, cfg.x_grid

    def block(b, size):
        H = complex_normal(stream_rng(cfg.seed, b), (size, dims.n, dims.m))
        if cfg.receiver == ReceiverKind.DBLAST:
            H = _rotate_for_dblast(H, b * BLOCK)
        if cfg.receiver == ReceiverKind.LINEAR_ZF:
            x = after_projection_powers(H)
        else:
            x = step_norms(H, cfg.ordering)
        xs = np.sort(x, axis=0)
        counts = np.stack([np.searchsorted(xs[:, i], grid, side="right") for i in range(dims.m)])
        return _Outage(size, counts.astype(np.int64))

    stop = None
    if cfg.auto_stop:
        def stop(acc):
            return _ci_small_enough(acc.counts[0], acc.trials, cfg.ci_rel_target)

    acc = _run_blocks(block, cfg.channel_trials, threads, stop)
    label = _label(cfg)
    return [
        EstimatedCurve.from_counts(cfg.x_grid_db, acc.counts[i], acc.trials, f"mc_step{i + 1}_{label}", unit="x_db")
        for i in range(dims.m)
    ]


@dataclass
class _Outage:
    trials: int
    counts: np.ndarray

    def __add__(self, other):
        return _Outage(self.trials + other.trials, self.counts + other.counts)


def _label(cfg: ExperimentConfig) -> str:
    tag = ReceiverKind(cfg.receiver).value
    if cfg.receiver in (ReceiverKind.ZF_SIC, ReceiverKind.DBLAST):
        tag += f"_{OrderingStrategy(cfg.ordering).value}"
    return f"{cfg.dims.n}x{cfg.dims.m}_{tag}"


@dataclass
class ErrorRates:
    bler: EstimatedCurve
    tber: EstimatedCurve | None
    per_step_ber: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.bler, self.tber, self.per_step_ber))


TBER_REFUSAL = (
    "the semi-analytic estimator averages 1 - prod(1 - Pe(gamma_i)) over channels, which is exact "
    "for BLER but does not model error propagation, so it cannot give the total (bit) error rate; "
    "use the symbol-level estimator"
)


def estimate_error_rates(cfg: ExperimentConfig, threads: int = 1, metrics=None) -> ErrorRates:
    """Average BLER, TBER and conditional per-step BER on ``cfg.snr_grid_db``.

    The symbol-level estimator runs full detection with physical error
    propagation. The semi-analytic one averages the conditional product
    formula over channels (BLER and per-step rates only).
    """
    if metrics is not None and cfg.estimator == Estimator.SEMI_ANALYTIC and "tber" in metrics:
        raise ValueError(TBER_REFUSAL)
    label = _label(cfg)
    grid = cfg.snr_grid_db
    m = cfg.dims.m

    if cfg.estimator == Estimator.SEMI_ANALYTIC:
        if cfg.receiver not in (ReceiverKind.ZF_SIC, ReceiverKind.DBLAST):
            raise ValueError("the semi-analytic estimator needs independent step noise, i.e. a SIC receiver")

        stop = None
        if cfg.auto_stop:
            def stop(acc):
                mean = acc.bler / acc.trials
                sd = np.sqrt(np.maximum(acc.bler_sq / acc.trials - mean ** 2, 0.0) / acc.trials)
                return bool(np.all((mean > 0) & (CI_Z * sd <= cfg.ci_rel_target * mean)))

        acc = _run_blocks(lambda b, size: _semi_block(cfg, b, size), cfg.channel_trials, threads, stop)
        bler = _normal_curve(grid, acc.bler, acc.bler_sq, acc.trials, f"mc_semi_bler_{label}")
        steps = [
            _normal_curve(grid, acc.step[:, i], acc.step_sq[:, i], acc.trials, f"mc_semi_step{i + 1}_ber_{label}")
            for i in range(m)
        ]
        return ErrorRates(bler, None, steps)

    stop = None
    if cfg.auto_stop:
        def stop(acc):
            return _ci_small_enough(acc.block, acc.trials, cfg.ci_rel_target)

    acc = _run_blocks(lambda b, size: _symbol_block(cfg, b, size), cfg.channel_trials, threads, stop)
    unit = "gamma0_db"
    bler = EstimatedCurve.from_counts(grid, acc.block, acc.trials, f"mc_bler_{label}", unit)
    tber = EstimatedCurve.from_counts(grid, acc.bits, acc.trials * m, f"mc_tber_{label}", unit)
    steps = [
        EstimatedCurve.from_counts(grid, acc.step_err[:, i], acc.step_trials[:, i], f"mc_step{i + 1}_ber_{label}", unit)
        for i in range(m)
    ]
    return ErrorRates(bler, tber, steps)


def _normal_curve(grid, total, total_sq, n, label):
    mean = total / n
    var = np.maximum(total_sq / n - mean ** 2, 0.0)
    half = CI_Z * np.sqrt(var / n)
    return EstimatedCurve(grid, mean, np.clip(mean - half, 0, 1), np.clip(mean + half, 0, 1), n, label,
                          unit="gamma0_db", method="normal")


@dataclass
class OrderingGainReport:
    curves: dict
    quantiles: dict
    offsets_db: dict


def estimate_ordering_gain(dims: SystemDims, x_grid_db, trials: int, seed: int, levels=(1e-2, 1e-3),
                           threads: int = 1) -> OrderingGainReport:
    """First-step outage of the three orderings on common channel draws.

    Offsets are horizontal gaps (dB) between the empirical CDFs at each
    outage level, taken from exact empirical quantiles.
    """
    def block(b, size):
        H = complex_normal(stream_rng(seed, b), (size, dims.n, dims.m))
        powers = after_projection_powers(H)
        norms = np.sum(np.abs(H) ** 2, axis=1)
        rows = np.arange(size)
        # first-step powers: optimal, before-projection ordering, fixed order
        return [np.stack([powers.max(axis=1), powers[rows, np.argmax(norms, axis=1)], powers[:, 0]], axis=1)]

    x1 = np.concatenate(_run_blocks(block, trials, threads), axis=0)
    names = ("optimal", "suboptimal", "none")
    grid = 10.0 ** (np.asarray(x_grid_db) / 10.0)
    curves, quantiles = {}, {}
    for j, name in enumerate(names):
        col = np.sort(x1[:, j])
        events = np.searchsorted(col, grid, side="right")
        curves[name] = EstimatedCurve.from_counts(x_grid_db, events, trials, f"mc_f1_{dims.n}x{dims.m}_{name}", "x_db")
        quantiles[name] = {lv: float(np.quantile(col, lv)) for lv in levels}
    pairs = {
        "optimal_vs_unordered": ("optimal", "none"),
        "suboptimal_vs_unordered": ("suboptimal", "none"),
        "optimal_vs_suboptimal": ("optimal", "suboptimal"),
    }
    offsets = {
        key: {lv: 10.0 * math.log10(quantiles[a][lv] / quantiles[b][lv]) for lv in levels}
        for key, (a, b) in pairs.items()
    }
    return OrderingGainReport(curves, quantiles, offsets)


def genie_estimator(dims: SystemDims, trials: int, seed: int, x: float | None = None, gamma0: float | None = None,
                    mod: Modulation = Modulation.BPSK):
    """Callable for the genie chain: n x k values on common channel draws.

    The n x k system keeps the first k columns of each full n x m draw
    (the genie removes the trailing transmitters). With ``x`` it returns the
    optimal-ordering first-step outage; with ``gamma0`` the semi-analytic BLER.
    """
    if (x is None) == (gamma0 is None):
        raise ValueError("give exactly one of x or gamma0")

    def estimate(sub: SystemDims) -> float:
        def block(b, size):
            H = complex_normal(stream_rng(seed, b), (size, dims.n, dims.m))[:, :, : sub.m]
            xs = step_norms(H, OrderingStrategy.OPTIMAL)
            if x is not None:
                return np.array([np.count_nonzero(xs[:, 0] <= x)], dtype=float)
            pe = ber_conditional(mod, xs * gamma0)
            return np.array([np.sum(1.0 - np.prod(1.0 - pe, axis=1))])

        return float(_run_blocks(block, trials)[0] / trials)

    return estimate
