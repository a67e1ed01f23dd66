"""Exhaustive ground truth for small instances.

Everything here enumerates spin configurations outright, so it is the
reference against which every solver in the package is checked. Hard caps
keep the enumeration budget sane: 2^24 configurations for ground states,
2^20 for thermal averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import IsingInstance

GROUND_STATE_CAP = 24
MOMENTS_CAP = 20
_BLOCK_BITS = 16


@dataclass(frozen=True)
class GroundTruth:
    ground_energy: float
    ground_states: np.ndarray  # (degeneracy, n) int8, lexicographically sorted
    degeneracy: int


@dataclass(frozen=True)
class ExactMoments:
    beta: float
    log_z: float
    magnetizations: np.ndarray


@dataclass(frozen=True)
class CavitySpec:
    """What to modify before taking Gibbs averages.

    ``clamp_spin`` fixes one spin to +-1 (breaking the global flip symmetry);
    ``remove_edge`` zeroes one coupling, giving the cavity system in which
    message-passing marginals are defined.
    """

    clamp_spin: tuple[int, int] | None = None
    remove_edge: tuple[int, int] | None = None


def _spin_blocks(n_free: int):
    """Yield (codes, +-1 matrix) blocks covering all 2^n_free assignments."""
    total = 1 << n_free
    block = min(total, 1 << _BLOCK_BITS)
    shifts = np.arange(n_free, dtype=np.uint32)
    for start in range(0, total, block):
        codes = np.arange(start, min(start + block, total), dtype=np.uint32)
        bits = (codes[:, None] >> shifts[None, :]) & 1
        yield codes, (2.0 * bits - 1.0)


def exhaustive_ground_states(instance: IsingInstance) -> GroundTruth:
    """Exact minimum of H over all configurations, with every minimizer.

    Enumerates the half-space with the first spin fixed to +1 and mirrors the
    result (H is invariant under a global flip). Ties are detected by exact
    float equality, which is sound here because degenerate configurations
    produce bit-identical sums.
    """
    n = instance.n
    if n > GROUND_STATE_CAP:
        raise ValueError(
            f"exhaustive search capped at n={GROUND_STATE_CAP}, got n={n}"
        )
    J = instance.dense()
    if n == 1:
        ones = np.array([[1], [-1]], dtype=np.int8)
        return GroundTruth(0.0, ones[::-1].copy(), 2)

    best = np.inf
    best_codes: list[np.ndarray] = []
    for codes, tail in _spin_blocks(n - 1):
        S = np.empty((len(codes), n))
        S[:, 0] = 1.0
        S[:, 1:] = tail
        E = -0.5 * np.einsum("bi,bi->b", S @ J, S)
        m = E.min()
        if m < best:
            best = m
            best_codes = [codes[E == m]]
        elif m == best:
            best_codes.append(codes[E == best])

    codes = np.concatenate(best_codes)
    shifts = np.arange(n - 1, dtype=np.uint32)
    bits = (codes[:, None].astype(np.uint32) >> shifts[None, :]) & 1
    reps = np.empty((len(codes), n), dtype=np.int8)
    reps[:, 0] = 1
    reps[:, 1:] = (2 * bits - 1).astype(np.int8)
    states = np.concatenate([reps, -reps], axis=0)
    order = np.lexsort(states.T[::-1])
    states = states[order]
    return GroundTruth(float(best), states, int(states.shape[0]))


def _gibbs_sums(J: np.ndarray, beta: float, fixed: dict[int, int]):
    """Streaming log-sum-exp over all assignments of the unfixed spins.

    Returns (log_z, magnetizations). The running maximum is tracked so the
    accumulators are rescaled rather than overflowed at large beta.
    """
    n = J.shape[0]
    free = [i for i in range(n) if i not in fixed]
    n_free = len(free)
    shift = -np.inf
    z_acc = 0.0
    m_acc = np.zeros(n)
    base = np.zeros(n)
    for i, v in fixed.items():
        base[i] = float(v)
    for _, tail in _spin_blocks(n_free) if n_free else [(None, np.zeros((1, 0)))]:
        S = np.tile(base, (tail.shape[0], 1))
        if n_free:
            S[:, free] = tail
        logw = -beta * (-0.5 * np.einsum("bi,bi->b", S @ J, S))
        block_max = float(logw.max())
        if block_max > shift:
            scale = np.exp(shift - block_max) if np.isfinite(shift) else 0.0
            z_acc *= scale
            m_acc *= scale
            shift = block_max
        w = np.exp(logw - shift)
        z_acc += float(w.sum())
        m_acc += w @ S
    return shift + np.log(z_acc), m_acc / z_acc


def exact_moments(instance: IsingInstance, beta: float) -> ExactMoments:
    """log Z and Gibbs magnetizations by full enumeration (n <= 20)."""
    if instance.n > MOMENTS_CAP:
        raise ValueError(f"exact moments capped at n={MOMENTS_CAP}, got n={instance.n}")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and >= 0")
    log_z, mags = _gibbs_sums(instance.dense(), beta, {})
    return ExactMoments(beta=beta, log_z=float(log_z), magnetizations=mags)


def exact_cavity_magnetizations(
    instance: IsingInstance, beta: float, clamp: CavitySpec
) -> np.ndarray:
    """Gibbs magnetizations of a clamped and/or edge-removed system."""
    n = instance.n
    if n > MOMENTS_CAP:
        raise ValueError(f"cavity magnetizations capped at n={MOMENTS_CAP}, got n={n}")
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and >= 0")
    J = instance.dense().copy()
    fixed: dict[int, int] = {}
    if clamp.remove_edge is not None:
        i, j = clamp.remove_edge
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid edge to remove: ({i},{j})")
        if J[i, j] == 0.0:
            raise ValueError(f"edge ({i},{j}) has no coupling to remove")
        J[i, j] = 0.0
        J[j, i] = 0.0
    if clamp.clamp_spin is not None:
        idx, val = clamp.clamp_spin
        if not 0 <= idx < n:
            raise ValueError(f"clamp index {idx} out of range")
        if val not in (-1, 1):
            raise ValueError("clamp value must be +-1")
        fixed[idx] = val
    _, mags = _gibbs_sums(J, beta, fixed)
    return mags
