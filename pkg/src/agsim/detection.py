"""Multiuser detectors and their outage sets.

A zero-forcing detector (pseudo-inverse of the channel estimate) with the
per-user Shannon rate, the regularized MMSE kernel, and the ordered
MMSE-with-successive-cancellation procedure that decodes the strongest
remaining user, subtracts its estimated contribution from the true channel
(leaving the cancellation residual in place), and declares everyone still
undecoded in outage as soon as the best remaining user falls below the
guaranteed rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularMatrixError
from .estimation import EstimatedChannel
from .propagation import ChannelMatrix, SystemParams

MAX_CONDITION_NUMBER = 1e12
_WILSON_Z = 1.959963984540054  # two-sided 95%


def _entries(h) -> np.ndarray:
    if isinstance(h, (EstimatedChannel, ChannelMatrix)):
        return h.entries
    return np.asarray(h)


@dataclass(frozen=True)
class ZfDetector:
    """Zero-forcing filter G with G @ H_hat = I_K for full-rank estimates."""

    g: np.ndarray  # (K, M)


def zf_detector(h_hat) -> ZfDetector:
    """G = (H^H H)^(-1) H^H via a Cholesky solve of the Gram matrix.

    Raises SingularMatrixError when the estimate is rank deficient or its
    condition number exceeds 1e12.
    """
    h = _entries(h_hat)
    m, k = h.shape
    if m < k:
        raise SingularMatrixError(f"need at least as many antennas as users ({m} < {k})")
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > MAX_CONDITION_NUMBER:
        raise SingularMatrixError("channel estimate is singular or too ill-conditioned")
    gram = h.conj().T @ h
    try:
        g = cho_solve(cho_factor(gram), h.conj().T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
        raise SingularMatrixError(str(exc)) from exc
    return ZfDetector(g)


def zf_rates(det: ZfDetector, h_true, params: SystemParams) -> np.ndarray:
    """Per-user achievable rates of the ZF filter against the true channel.

    R_k = log2(1 + |g_k h_k|^2 P / (sum_{a != k} |g_k h_a|^2 P + N0 ||g_k||^2)).
    """
    h = _entries(h_true)
    gh = det.g @ h                                   # (K, K)
    power = np.abs(gh) ** 2 * params.tx_power_w
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    noise = params.noise_power_w * np.sum(np.abs(det.g) ** 2, axis=1)
    return np.log2(1.0 + signal / (interference + noise))


@dataclass(frozen=True)
class OutageSet:
    """Users in outage at one instant, with whatever rates were evaluated."""

    members: tuple[int, ...]
    rates: dict[int, float]
    decode_order: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.members)


def zf_outage_set(rates: np.ndarray, guaranteed_rate: float) -> OutageSet:
    """Users whose rate falls strictly below the guaranteed rate."""
    members = tuple(int(k) for k in np.flatnonzero(rates < guaranteed_rate))
    return OutageSet(members, {int(k): float(r) for k, r in enumerate(rates)})


@dataclass(frozen=True)
class MmseKernel:
    """Q = (N0/P I + H^H H)^(-1); Hermitian positive definite."""

    q: np.ndarray  # (K, K)


def mmse_kernel(h_hat, noise_ratio: float) -> MmseKernel:
    if noise_ratio <= 0:
        raise SingularMatrixError("noise_ratio must be positive")
    h = _entries(h_hat)
    k = h.shape[1]
    a = noise_ratio * np.eye(k) + h.conj().T @ h
    q = cho_solve(cho_factor(a), np.eye(k, dtype=complex))
    q = 0.5 * (q + q.conj().T)
    return MmseKernel(q)


def vms_outage_set(h_hat, h_true, cfo: np.ndarray, n: int,
                   params: SystemParams) -> OutageSet:
    """Ordered MMSE successive cancellation outage set at time index n.

    Each round recomputes the MMSE kernel from the current estimate, picks the
    user with the smallest kernel diagonal (highest SINR; ties fall to the
    lowest index) among those not yet cancelled, and evaluates its rate
    against the current true columns, which hold cancellation residuals for
    already-decoded users.  A decoded user's column is replaced by
    h_k - h_hat_k exp(j(2 pi df_k n - known_phase_k)): the receiver rotates
    its estimate forward using the CFO it tracks, so only estimation noise
    and channel aging survive cancellation.  The first below-rate user stops
    the loop and every remaining user is in outage.
    """
    h_est = _entries(h_hat).astype(complex).copy()
    h_cur = _entries(h_true).astype(complex).copy()
    k_count = h_est.shape[1]
    if isinstance(h_hat, EstimatedChannel):
        known_phase = h_hat.known_cfo_phase
    else:
        known_phase = np.zeros(k_count)
    cfo = np.asarray(cfo, dtype=float)
    noise_ratio = params.noise_power_w / params.tx_power_w

    remaining = list(range(k_count))
    decode_order: list[int] = []
    rates: dict[int, float] = {}
    for _ in range(k_count):
        q = mmse_kernel(h_est, noise_ratio).q
        q_diag = np.real(np.diag(q))
        i = remaining[int(np.argmin(q_diag[remaining]))]
        w = q[i, :] @ h_est.conj().T                 # (M,)
        prods = np.abs(w @ h_cur) ** 2 * params.tx_power_w
        signal = prods[i]
        interference = prods.sum() - signal
        noise = params.noise_power_w * float(np.real(np.vdot(w, w)))
        rate = math.log2(1.0 + signal / (interference + noise))
        rates[i] = rate
        if rate < params.guaranteed_rate:
            break
        decode_order.append(i)
        remaining.remove(i)
        rot = np.exp(1j * (2.0 * math.pi * cfo[i] * n - known_phase[i]))
        h_cur[:, i] = h_cur[:, i] - h_est[:, i] * rot
        h_est[:, i] = 0.0
    return OutageSet(tuple(remaining), rates, tuple(decode_order))


@dataclass(frozen=True)
class OutageStats:
    """Outage probability estimate with a 95% Wilson interval."""

    p_out: float
    ci_low: float
    ci_high: float
    n_user_trials: int


def wilson_interval(successes: int, n: int) -> tuple[float, float]:
    """95% Wilson score interval for a Bernoulli proportion."""
    if n <= 0:
        raise ValueError("need at least one observation")
    z2 = _WILSON_Z * _WILSON_Z
    p = successes / n
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = _WILSON_Z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def outage_probability(sets: list[OutageSet], k: int) -> OutageStats:
    """Mean outage fraction E[|S|]/K over trials, with its Wilson interval."""
    if not sets:
        raise ValueError("no outage sets given")
    successes = sum(len(s) for s in sets)
    n = k * len(sets)
    lo, hi = wilson_interval(successes, n)
    return OutageStats(successes / n, lo, hi, n)
