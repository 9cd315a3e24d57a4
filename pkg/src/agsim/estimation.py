"""CFO pre-compensation and pilot-based channel estimators.

Two estimators produce the receiver's channel estimate from noisy pilots sent
over the true time-varying channel: a time-division scheme (one dedicated
pilot symbol per user) and simultaneous constant-amplitude Zadoff-Chu
sequences whose cyclic shifts are mutually orthogonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .propagation import SystemParams


@dataclass(frozen=True)
class CfoCompensation:
    """Transmitter-side CFO pre-compensation with accuracy eta in [-1, 1].

    compensated[k] = eta * cfo[k] is the offset each aircraft actually removes
    (cycles/sample); cfo holds the true offsets.
    """

    eta: float
    cfo: np.ndarray
    compensated: np.ndarray


def precompensate(cfo: np.ndarray, eta: float) -> CfoCompensation:
    if not -1.0 <= eta <= 1.0:
        raise DomainError(f"eta={eta} outside [-1, 1]")
    cfo = np.asarray(cfo, dtype=float)
    return CfoCompensation(eta, cfo, eta * cfo)


@dataclass(frozen=True)
class PilotMatrix:
    """K x tau pilot set: rows are distinct cyclic shifts of one ZC root.

    Entries are unit modulus (per-symbol power equals the transmit power), so
    rows satisfy Phi Phi^H = tau I_K.
    """

    entries: np.ndarray
    root: int
    shifts: tuple[int, ...]

    @property
    def tau(self) -> int:
        return self.entries.shape[1]


def zc_root_sequence(length: int, root: int = 1) -> np.ndarray:
    """Constant-amplitude Zadoff-Chu root sequence of a given length."""
    b = np.arange(length)
    if length % 2:
        phase = -math.pi * root * b * (b + 1) / length
    else:
        phase = -math.pi * root * b * b / length
    return np.exp(1j * phase)


def zc_pilots(k: int) -> PilotMatrix:
    """Pilot set for k users: length tau = k + 1, root 1, shifts 0..k-1."""
    if k < 1:
        raise DomainError("need at least one user")
    tau = k + 1
    base = zc_root_sequence(tau)
    shifts = tuple(range(k))
    rows = np.stack([np.roll(base, -s) for s in shifts])
    return PilotMatrix(rows, 1, shifts)


@dataclass(frozen=True)
class EstimatedChannel:
    """Receiver-side channel estimate.

    known_cfo_phase[k] is the residual-CFO phase the estimate of column k is
    known (at the GS, which tracks each user's received frequency offset) to
    carry relative to the n=0 slowly-varying gains; detectors that re-rotate
    the estimate forward in time subtract it.  Zero when eta = 1.
    """

    entries: np.ndarray
    estimator: str
    estimation_index: int
    known_cfo_phase: np.ndarray


def _noise_block(shape, rng: np.random.Generator | None, unit_noise,
                 noise_power: float):
    if unit_noise is not None:
        block = np.asarray(unit_noise)
        if block.shape != shape:
            raise DomainError(f"noise block must have shape {shape}")
        return block
    if noise_power == 0.0:
        return np.zeros(shape)
    if rng is None:
        raise DomainError("either rng or a pre-drawn noise block is required")
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def estimate_td(channel_source, comp: CfoCompensation, params: SystemParams,
                rng: np.random.Generator | None = None,
                unit_noise: np.ndarray | None = None) -> EstimatedChannel:
    """Time-division estimate: user k transmits one pilot in slot n = k.

    Received vector r = h_k[n] exp(-j2 pi df_hat_k n) sqrt(P) + z, estimate
    r / sqrt(P) (unit pilot symbol).  unit_noise, when given, must be an
    (M, K) block of CN(0,1) draws; it is scaled by sqrt(N0) internally so the
    same block can be shared across estimators and compensation accuracies.
    """
    k_count = comp.cfo.shape[0]
    m = params.n_antennas
    sqrt_p = math.sqrt(params.tx_power_w)
    sqrt_n0 = math.sqrt(params.noise_power_w)
    noise = _noise_block((m, k_count), rng, unit_noise, params.noise_power_w)

    cols = np.empty((m, k_count), dtype=complex)
    known_phase = np.empty(k_count)
    for k in range(k_count):
        n_k = k
        h_col = channel_source(n_k).entries[:, k]
        rot = np.exp(-2j * math.pi * comp.compensated[k] * n_k)
        r = h_col * rot * sqrt_p + sqrt_n0 * noise[:, k]
        cols[:, k] = r / sqrt_p
        known_phase[k] = 2.0 * math.pi * (comp.cfo[k] - comp.compensated[k]) * n_k
    return EstimatedChannel(cols, "TD", k_count - 1, known_phase)


def estimate_zc(channel_source, pilots: PilotMatrix, comp: CfoCompensation,
                params: SystemParams, rng: np.random.Generator | None = None,
                unit_noise: np.ndarray | None = None) -> EstimatedChannel:
    """Zadoff-Chu estimate: all users transmit simultaneously for tau symbols.

    Symbol b (time index n = b) is received as
    r = H_n diag(exp(-j2 pi df_hat_k n)) Phi[:, b] sqrt(P) + z and the block
    is correlated back with Hhat = R Phi^H / (tau sqrt(P)).  Residual CFO
    rotates users inside the block, which breaks shift orthogonality and
    leaks energy between columns.  unit_noise: (M, tau) CN(0,1) block.
    """
    k_count = comp.cfo.shape[0]
    tau = pilots.tau
    m = params.n_antennas
    sqrt_p = math.sqrt(params.tx_power_w)
    sqrt_n0 = math.sqrt(params.noise_power_w)
    noise = _noise_block((m, tau), rng, unit_noise, params.noise_power_w)

    received = np.empty((m, tau), dtype=complex)
    for b in range(tau):
        h = channel_source(b).entries
        lam_hat = np.exp(-2j * math.pi * comp.compensated * b)
        received[:, b] = h @ (lam_hat * pilots.entries[:, b]) * sqrt_p \
            + sqrt_n0 * noise[:, b]

    estimate = received @ pilots.entries.conj().T / (tau * sqrt_p)

    residual = comp.cfo - comp.compensated
    steps = np.arange(tau)
    block_mean = np.exp(2j * math.pi * np.outer(residual, steps)).mean(axis=1)
    return EstimatedChannel(estimate, "ZC", tau - 1, np.angle(block_mean))
