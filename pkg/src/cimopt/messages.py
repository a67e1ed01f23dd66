"""Belief propagation and TAP iterations for pairwise Ising systems.

BP keeps one cavity magnetization per directed edge and updates all of them
synchronously:

    m_{i->j} <- tanh( sum_{k in N(i), k != j} atanh( tanh(beta J_ik) m_{k->i} ) )

optionally blended with the previous value (damping). Spins can be clamped by
pinning their outgoing messages, which is how the tree-exactness checks avoid
the vacuous all-zero symmetric answer. TAP tracks one magnetization per spin
with an Onsager memory term; both the standard one-step-memory indexing and
the two-step variant are available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instances import IsingInstance, SpinConfig, round_spins, rounded_config

_PIN = 1.0 - 1e-15  # clamped messages and atanh guard sit just inside (-1, 1)


@dataclass(frozen=True)
class EdgeGeometry:
    """Directed-edge layout of an instance's nonzero couplings."""

    n: int
    src: np.ndarray  # (2E,) tail of each directed edge
    dst: np.ndarray  # (2E,) head
    weight: np.ndarray  # (2E,) coupling of the underlying undirected edge
    reverse: np.ndarray  # index of the opposite directed edge

    @classmethod
    def from_instance(cls, instance: IsingInstance) -> "EdgeGeometry":
        i, j, w = instance.edge_arrays()
        m = len(w)
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        weight = np.concatenate([w, w])
        reverse = np.concatenate([np.arange(m) + m, np.arange(m)])
        return cls(n=instance.n, src=src, dst=dst, weight=weight, reverse=reverse)

    def outgoing(self, node: int) -> np.ndarray:
        return np.nonzero(self.src == node)[0]


@dataclass
class MessageSet:
    """Cavity magnetizations over directed edges, plus update bookkeeping."""

    geometry: EdgeGeometry
    values: np.ndarray
    iteration: int = 0
    damping: float = 0.5
    clamps: dict = field(default_factory=dict)  # spin index -> +-1
    saturations: int = 0

    def pin_clamps(self) -> None:
        for node, value in self.clamps.items():
            self.values[self.geometry.outgoing(node)] = value * _PIN


def init_messages(
    instance: IsingInstance,
    seed,
    damping: float = 0.5,
    clamps: dict | None = None,
    values: np.ndarray | None = None,
) -> MessageSet:
    """Messages seeded uniform in (-0.1, 0.1), with clamp pins applied."""
    geom = EdgeGeometry.from_instance(instance)
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    clamps = dict(clamps or {})
    for node, value in clamps.items():
        if not 0 <= node < instance.n:
            raise ValueError(f"clamp index {node} out of range")
        if value not in (-1, 1):
            raise ValueError("clamp value must be +-1")
    if values is None:
        values = np.random.default_rng(seed).uniform(-0.1, 0.1, len(geom.src))
    else:
        values = np.asarray(values, dtype=float).copy()
        if values.shape != geom.src.shape:
            raise ValueError("message vector has wrong length")
        if np.any(np.abs(values) >= 1.0):
            raise ValueError("messages must lie strictly inside (-1, 1)")
    ms = MessageSet(geometry=geom, values=values, damping=damping, clamps=clamps)
    ms.pin_clamps()
    return ms


def _edge_terms(ms: MessageSet, beta: float) -> tuple[np.ndarray, int]:
    arg = np.tanh(beta * ms.geometry.weight) * ms.values
    saturated = int(np.sum(np.abs(arg) > _PIN))
    return np.arctanh(np.clip(arg, -_PIN, _PIN)), saturated


def bp_step(ms: MessageSet, beta: float) -> tuple[MessageSet, float]:
    """One synchronous damped sweep; returns the new set and max |change|."""
    geom = ms.geometry
    theta, saturated = _edge_terms(ms, beta)
    totals = np.bincount(geom.dst, weights=theta, minlength=geom.n)
    fresh = np.tanh(totals[geom.src] - theta[geom.reverse])
    new_values = (1.0 - ms.damping) * fresh + ms.damping * ms.values
    out = MessageSet(
        geometry=geom,
        values=new_values,
        iteration=ms.iteration + 1,
        damping=ms.damping,
        clamps=ms.clamps,
        saturations=ms.saturations + saturated,
    )
    out.pin_clamps()
    return out, float(np.max(np.abs(out.values - ms.values), initial=0.0))


def bp_magnetizations(ms: MessageSet, beta: float) -> np.ndarray:
    """Marginal magnetizations m_i = tanh(sum_k atanh(tanh(beta J_ik) m_{k->i}))."""
    theta, _ = _edge_terms(ms, beta)
    totals = np.bincount(ms.geometry.dst, weights=theta, minlength=ms.geometry.n)
    mags = np.tanh(totals)
    for node, value in ms.clamps.items():
        mags[node] = float(value)
    return mags


@dataclass(frozen=True)
class BPResult:
    messages: MessageSet
    magnetizations: np.ndarray
    converged: bool
    iterations: int


def bp_run(
    instance: IsingInstance,
    beta: float,
    seed,
    max_iters: int = 1000,
    tol: float = 1e-10,
    damping: float = 0.5,
    clamps: dict | None = None,
    init: np.ndarray | None = None,
) -> BPResult:
    """Iterate bp_step until the largest message change drops below tol.

    Non-convergence is reported through the flag, not an exception. Undamped
    runs (damping=0) converge on trees in at most diameter+1 sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ms = init_messages(instance, seed, damping=damping, clamps=clamps, values=init)
    converged = False
    for _ in range(max_iters):
        ms, delta = bp_step(ms, beta)
        if delta < tol:
            converged = True
            break
    return BPResult(
        messages=ms,
        magnetizations=bp_magnetizations(ms, beta),
        converged=converged,
        iterations=ms.iteration,
    )


def bp_energy_readout(instance: IsingInstance, magnetizations) -> SpinConfig:
    """Decode marginals to a configuration by sign rounding and score it."""
    return rounded_config(instance, np.asarray(magnetizations, dtype=float))


@dataclass
class TapState:
    m_now: np.ndarray
    m_prev: np.ndarray
    beta: float
    variant: str


@dataclass(frozen=True)
class TapResult:
    state: TapState
    converged: bool
    iterations: int


def tap_run(
    instance: IsingInstance,
    beta: float,
    seed,
    max_iters: int = 2000,
    tol: float = 1e-10,
    variant: str = "bolthausen",
) -> TapResult:
    """Dense mean-field iteration with the Onsager reaction term.

    variant "bolthausen" (default) uses the standard one-step memory

        m^{t+1} = tanh( beta J m^t - beta^2 m^{t-1} * (J.J) (1 - m^t.^2) )

    while "two_step" keeps the deeper history indexing

        m^{t+1} = tanh( beta J m^t - beta^2 m^{t-2} * (J.J) (1 - m^{t-1}.^2) ).

    History before t=0 is zero; m^0 is seeded uniform in (-0.1, 0.1).
    """
    if variant not in ("bolthausen", "two_step"):
        raise ValueError(f"unknown TAP variant {variant!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = instance.n
    J2 = instance.dense() ** 2
    rng = np.random.default_rng(seed)
    m_now = rng.uniform(-0.1, 0.1, n)
    m_prev = np.zeros(n)
    m_prev2 = np.zeros(n)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        drive = beta * instance.coupled_field(m_now)
        if variant == "bolthausen":
            onsager = beta**2 * m_prev * (J2 @ (1.0 - m_now**2))
        else:
            onsager = beta**2 * m_prev2 * (J2 @ (1.0 - m_prev**2))
        m_next = np.tanh(drive - onsager)
        delta = float(np.max(np.abs(m_next - m_now)))
        m_prev2, m_prev, m_now = m_prev, m_now, m_next
        if delta < tol:
            converged = True
            break
    state = TapState(m_now=m_now, m_prev=m_prev, beta=beta, variant=variant)
    return TapResult(state=state, converged=converged, iterations=iterations)


def tap_fixed_point_gap(instance: IsingInstance, m, beta: float, variant: str) -> float:
    """Residual of the collapsed-history fixed-point equation at m."""
    m = np.asarray(m, dtype=float)
    J2 = instance.dense() ** 2
    drive = beta * instance.coupled_field(m)
    onsager = beta**2 * m * (J2 @ (1.0 - m**2))
    return float(np.max(np.abs(np.tanh(drive - onsager) - m), initial=0.0))
