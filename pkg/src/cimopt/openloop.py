"""Open-loop analog dynamics: noisy gradient flow of soft spins.

The state is a vector of real amplitudes x integrated by explicit Euler
(Euler-Maruyama when noise is on):

    dx_i = [ f(x_i) + beta(t) * sum_j J_ij g(x_j + gamma(t) eta_j) ] dt

with fresh standard-normal eta per step per spin. Noise enters only through
the measured feedback path; an optional additive diffusion term is available
but off by default. With static gains and no noise the flow descends the
potential V(y) = V_b(y) - (beta/2) y.J y evaluated at y = g(x).
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .instances import (
    IsingInstance,
    SpinConfig,
    energies_of_batch,
    round_spins,
)
from .spectral import deterministic_perturbation, extreme_eigenpair

_NOISE_CHUNK = 1024  # fixed so per-seed noise streams never depend on call pattern
_GAUSS_NODES = 64


@dataclass(frozen=True)
class Nonlinearity:
    """Gain-saturation shape f and feedback readout shape g.

    f_kind "cubic" is f(x) = (p-1)x - x^3; "tanh_saturation" is
    f(x) = -x + p tanh(x). g_kind is "identity" or "tanh". Both f choices are
    odd with f(0) = 0 and bifurcate at pump p = 1.
    """

    f_kind: str = "cubic"
    g_kind: str = "identity"
    pump: float = 1.0

    def __post_init__(self):
        if self.f_kind not in ("cubic", "tanh_saturation"):
            raise ValueError(f"unknown f_kind {self.f_kind!r}")
        if self.g_kind not in ("identity", "tanh"):
            raise ValueError(f"unknown g_kind {self.g_kind!r}")

    def f(self, x, pump: float | None = None):
        p = self.pump if pump is None else pump
        if self.f_kind == "cubic":
            return (p - 1.0) * x - x**3
        return -x + p * np.tanh(x)

    def f_prime(self, x, pump: float | None = None):
        p = self.pump if pump is None else pump
        if self.f_kind == "cubic":
            return (p - 1.0) - 3.0 * x**2
        t = np.tanh(x)
        return -1.0 + p * (1.0 - t**2)

    def g(self, x):
        return np.tanh(x) if self.g_kind == "tanh" else x

    def g_prime(self, x):
        if self.g_kind == "identity":
            return np.ones_like(x)
        t = np.tanh(x)
        return 1.0 - t**2

    def g_inverse(self, y):
        if self.g_kind == "identity":
            return y
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) >= 1.0):
            raise ValueError("g_inverse under tanh requires |y| < 1")
        return np.arctanh(y)

    def bistable_potential(self, y, pump: float | None = None) -> float:
        """V_b(y) = - sum_i integral_0^{y_i} f(g^{-1}(u)) du."""
        p = self.pump if pump is None else pump
        y = np.asarray(y, dtype=float)
        if self.g_kind == "tanh" and np.any(np.abs(y) >= 1.0):
            raise ValueError("bistable potential under tanh g requires |y| < 1")
        if self.f_kind == "cubic" and self.g_kind == "identity":
            return float(np.sum(y**4 / 4.0 - (p - 1.0) * y**2 / 2.0))
        if self.f_kind == "tanh_saturation" and self.g_kind == "identity":
            return float(np.sum(y**2 / 2.0 - p * _log_cosh(y)))
        if self.f_kind == "tanh_saturation" and self.g_kind == "tanh":
            return float(
                np.sum(y * np.arctanh(y) + 0.5 * np.log1p(-(y**2)) - p * y**2 / 2.0)
            )
        # cubic f with tanh g has no elementary antiderivative; quadrature
        nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
        u = 0.5 * y[:, None] * (nodes[None, :] + 1.0)
        integrand = (p - 1.0) * np.arctanh(u) - np.arctanh(u) ** 3
        return float(-np.sum(0.5 * y * (integrand @ weights)))


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


@dataclass(frozen=True)
class LogNoiseDecay:
    """gamma(t)^2 = c / log(2 + t); the classic slow annealing of noise."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("log decay constant must be positive")

    def at(self, t):
        return np.sqrt(self.c / np.log(2.0 + t))


@dataclass(frozen=True)
class Schedule:
    """Time courses of pump, coupling and noise over one run.

    ``pump`` and ``coupling`` are either constants or piecewise-linear knot
    lists ((fraction, value), ...) with fractions of the total duration in
    [0, 1]. ``noise`` is a constant gamma or a LogNoiseDecay.
    """

    duration: float
    dt: float = 0.01
    pump: float | tuple = ((0.0, 0.5), (1.0, 1.5))
    coupling: float | tuple = 1.0
    noise: float | LogNoiseDecay = 0.05

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must cover at least one step")
        for name in ("pump", "coupling"):
            knots = getattr(self, name)
            if not np.isscalar(knots):
                fracs = [k[0] for k in knots]
                if list(fracs) != sorted(fracs) or fracs[0] < 0 or fracs[-1] > 1:
                    raise ValueError(f"{name} knots must be sorted fractions in [0,1]")
        if isinstance(self.noise, (int, float)) and self.noise < 0:
            raise ValueError("noise amplitude must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def _eval(self, knots, t):
        if np.isscalar(knots):
            return np.broadcast_to(float(knots), np.shape(t)).copy() if np.ndim(t) else float(knots)
        fr = np.clip(np.asarray(t) / self.duration, 0.0, 1.0)
        return np.interp(fr, [k[0] for k in knots], [k[1] for k in knots])

    def pump_at(self, t):
        return self._eval(self.pump, t)

    def coupling_at(self, t):
        return self._eval(self.coupling, t)

    def noise_at(self, t):
        if isinstance(self.noise, LogNoiseDecay):
            return self.noise.at(t)
        return self._eval(self.noise, t)


@dataclass(frozen=True)
class BestTrace:
    """Sparse best-energy trace: one entry per strict improvement."""

    steps: tuple
    energies: tuple
    best_spins: np.ndarray

    @property
    def best_energy(self) -> float:
        return self.energies[-1] if self.energies else np.inf

    @property
    def best_step(self) -> int:
        return self.steps[-1] if self.steps else -1

    def best_by_step(self, step: int) -> float:
        """Best energy seen at or before ``step`` (inf if nothing recorded yet)."""
        idx = bisect_right(self.steps, step)
        return self.energies[idx - 1] if idx else np.inf


@dataclass
class OpenLoopState:
    x: np.ndarray
    t: float
    rng: np.random.Generator
    best: SpinConfig
    best_step: int


class _BestTracker:
    """Best-so-far bookkeeping for a batch of trajectories."""

    def __init__(self, instance: IsingInstance, runs: int):
        self.instance = instance
        self.best = np.full(runs, np.inf)
        self.steps = [[] for _ in range(runs)]
        self.energies = [[] for _ in range(runs)]
        self.spins = np.ones((runs, instance.n), dtype=np.int8)

    def update(self, step: int, x: np.ndarray) -> np.ndarray:
        s = round_spins(x)
        e = energies_of_batch(self.instance, s)
        for r in np.nonzero(e < self.best)[0]:
            self.best[r] = e[r]
            self.steps[r].append(step)
            self.energies[r].append(float(e[r]))
            self.spins[r] = s[r]
        return e

    def traces(self) -> list[BestTrace]:
        return [
            BestTrace(tuple(st), tuple(en), sp.copy())
            for st, en, sp in zip(self.steps, self.energies, self.spins)
        ]


class TrajectoryWriter:
    """CSV dump of a single trajectory at every recorded step."""

    def __init__(self, path, extra_columns: tuple = ()):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(
            ("step", "t", "energy_of_rounded", "best_energy", "V") + extra_columns
        )

    def row(self, step, t, energy_rounded, best_energy, v, *extra):
        self._writer.writerow((step, f"{t:.6f}", energy_rounded, best_energy, v) + extra)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def integrate_openloop_ensemble(
    instance: IsingInstance,
    nonlinearity: Nonlinearity,
    schedule: Schedule,
    seeds,
    x0: np.ndarray | None = None,
    record_every: int = 1,
    diffusion: float = 0.0,
    trace_writer: TrajectoryWriter | None = None,
):
    """Integrate one trajectory per seed, batched over the run axis.

    All runs share the instance and schedule; each has its own generator, so
    results for a given seed do not depend on the other seeds in the batch.
    Returns (final amplitudes (R, n), final generators, list of BestTrace).
    """
    n = instance.n
    rngs = [np.random.default_rng(s) for s in seeds]
    runs = len(rngs)
    if runs == 0:
        raise ValueError("need at least one seed")
    steps = schedule.n_steps
    dt = schedule.dt
    tgrid = np.arange(steps) * dt
    p_arr = np.atleast_1d(schedule.pump_at(tgrid))
    b_arr = np.atleast_1d(schedule.coupling_at(tgrid))
    g_arr = np.atleast_1d(schedule.noise_at(tgrid))
    noisy = bool(np.any(g_arr > 0))
    if trace_writer is not None and runs != 1:
        raise ValueError("trajectory dump supports a single run only")

    if x0 is not None:
        X = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (runs, n)))
    elif noisy:
        X = np.zeros((runs, n))
    else:
        # noiseless runs start from a tiny seeded perturbation of the origin
        X = 1e-6 * np.stack([rng.uniform(-1.0, 1.0, n) for rng in rngs])

    tracker = _BestTracker(instance, runs)
    e0 = tracker.update(0, X)
    if trace_writer is not None:
        v0 = lyapunov_value(instance, nonlinearity, float(b_arr[0]), X[0], pump=float(p_arr[0]))
        trace_writer.row(0, 0.0, float(e0[0]), tracker.best[0], v0)

    sq_dt = np.sqrt(dt)
    for k0 in range(0, steps, _NOISE_CHUNK):
        klen = min(_NOISE_CHUNK, steps - k0)
        eta = None
        eta_d = None
        if noisy:
            eta = np.stack([rng.standard_normal((klen, n)) for rng in rngs], axis=1)
        if diffusion > 0:
            eta_d = np.stack([rng.standard_normal((klen, n)) for rng in rngs], axis=1)
        for j in range(klen):
            k = k0 + j
            p = p_arr[k]
            gamma = g_arr[k]
            if noisy and gamma > 0:
                measured = X + gamma * eta[j]
            else:
                measured = X
            drive = nonlinearity.f(X, p) + b_arr[k] * instance.coupled_field(
                nonlinearity.g(measured)
            )
            X = X + drive * dt
            if diffusion > 0:
                X = X + diffusion * sq_dt * eta_d[j]
            step = k + 1
            peak = float(np.max(np.abs(X)))
            if not np.isfinite(peak) or peak > 10.0 * np.sqrt(max(p - 1.0, 1.0)):
                raise RuntimeError(
                    f"amplitudes diverged at t={step * dt:.3f}: max|x|={peak:.3g} "
                    "(dt too large for this gain)"
                )
            if step % record_every == 0 or step == steps:
                e = tracker.update(step, X)
                if trace_writer is not None:
                    v = lyapunov_value(
                        instance, nonlinearity, float(b_arr[k]), X[0], pump=float(p)
                    )
                    trace_writer.row(step, step * dt, float(e[0]), tracker.best[0], v)

    return X, rngs, tracker.traces()


def integrate_openloop(
    instance: IsingInstance,
    nonlinearity: Nonlinearity,
    schedule: Schedule,
    seed,
    x0: np.ndarray | None = None,
    record_every: int = 1,
    diffusion: float = 0.0,
    trace_writer: TrajectoryWriter | None = None,
) -> tuple[OpenLoopState, BestTrace]:
    X, rngs, traces = integrate_openloop_ensemble(
        instance,
        nonlinearity,
        schedule,
        [seed],
        x0=x0,
        record_every=record_every,
        diffusion=diffusion,
        trace_writer=trace_writer,
    )
    trace = traces[0]
    state = OpenLoopState(
        x=X[0],
        t=schedule.n_steps * schedule.dt,
        rng=rngs[0],
        best=SpinConfig(spins=trace.best_spins, energy=trace.best_energy),
        best_step=trace.best_step,
    )
    return state, trace


def threshold_gain(instance: IsingInstance, beta: float) -> float:
    """Gain a* at which the origin of the linearized flow destabilizes.

    The noiseless linearization dx = a x + beta J x is stable iff
    a < a* = -beta * lambda_max(J).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    lam, _, _, _ = extreme_eigenpair(instance, "max")
    return -beta * lam


def first_mode_alignment(
    instance: IsingInstance,
    beta: float,
    eps: float = 0.02,
    dt: float = 0.01,
    max_steps: int = 2_000_000,
    field_tol: float = 1e-9,
) -> tuple[SpinConfig, float]:
    """Settle the noiseless cubic flow just above threshold.

    Runs with gain a = a* + eps|a*| from a tiny fixed perturbation until the
    drive field vanishes, then reports the rounded configuration and the
    absolute cosine between the final state and the top eigenvector of J.
    """
    lam, v, _, _ = extreme_eigenpair(instance, "max")
    a_star = -beta * lam
    a = a_star + (eps * abs(a_star) if a_star != 0.0 else eps)
    nonlin = Nonlinearity("cubic", "identity", pump=1.0 + a)
    x = 1e-6 * deterministic_perturbation(instance.n)
    for k in range(max_steps):
        drive = nonlin.f(x) + beta * instance.coupled_field(x)
        x = x + drive * dt
        if k % 64 == 0 and np.max(np.abs(drive)) < field_tol:
            break
    else:
        raise RuntimeError(
            f"no plateau within {max_steps} steps (|drive|={np.max(np.abs(drive)):.3g})"
        )
    overlap = float(abs(x @ v) / np.linalg.norm(x))
    return rounded_config(instance, x), overlap


def lyapunov_value(
    instance: IsingInstance,
    nonlinearity: Nonlinearity,
    beta: float,
    x,
    pump: float | None = None,
) -> float:
    """V = V_b(g(x)) - (beta/2) g(x).J g(x); non-increasing along static noiseless flow."""
    y = nonlinearity.g(np.asarray(x, dtype=float))
    coupling_energy = -0.5 * float(y @ instance.coupled_field(y))
    return nonlinearity.bistable_potential(y, pump) + beta * coupling_energy


@dataclass(frozen=True)
class FixedPointReport:
    field_norm: float
    energy_identity_gap: float
    high_pump_gap: float | None


def fixed_point_residual(
    instance: IsingInstance,
    nonlinearity: Nonlinearity,
    beta: float,
    x,
    pump: float | None = None,
) -> FixedPointReport:
    """How close x is to a stationary point, plus the depth-energy identity.

    ``energy_identity_gap`` is |V(x) + (1/4) sum x^4|, which vanishes exactly
    at stationary points of the cubic/identity flow. ``high_pump_gap``
    compares V against -n(p-1)^2/4 + (p-1) beta H(sign x); that expansion has
    O(1) corrections at moderate pump, so it is reported as a diagnostic only
    (None when some amplitude is exactly zero).
    """
    x = np.asarray(x, dtype=float)
    p = nonlinearity.pump if pump is None else pump
    drive = nonlinearity.f(x, p) + beta * instance.coupled_field(nonlinearity.g(x))
    field_norm = float(np.max(np.abs(drive))) if x.size else 0.0
    v = lyapunov_value(instance, nonlinearity, beta, x, pump=p)
    gap = abs(v + 0.25 * float(np.sum(x**4)))
    high_pump = None
    if np.all(x != 0.0):
        signs = round_spins(x).astype(float)
        coupling_energy = -0.5 * float(signs @ instance.coupled_field(signs))
        a = p - 1.0
        high_pump = abs(v - (-instance.n * a**2 / 4.0 + a * beta * coupling_energy))
    return FixedPointReport(field_norm, gap, high_pump)
