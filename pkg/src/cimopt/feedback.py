"""Closed-loop dynamics: per-spin error variables kill amplitude heterogeneity.

Each spin carries a multiplicative coupling gain e_i > 0 driven by

    dx_i/dt = f(x_i) + beta e_i sum_j J_ij g(x_j)
    de_i/dt = -xi (g(x_i)^2 - a) e_i

so e_i grows until the squared readout g(x_i)^2 matches the target a. The
error variables are integrated in log space, which makes positivity exact for
any step size. Steady states exist only at local minima of H; raising the
target a (or modulating it so the flow's divergence stays positive) makes
those fixed points unstable and turns the search chaotic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .instances import (
    IsingInstance,
    SpinConfig,
    energy,
    local_fields,
)
from .openloop import BestTrace, Nonlinearity, TrajectoryWriter, _NOISE_CHUNK, _BestTracker

_MAX_LOG_E = 500.0


@dataclass(frozen=True)
class TargetModulation:
    """Keep the divergence of the (x, e) field at or above epsilon."""

    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("modulation epsilon must be positive")


@dataclass(frozen=True)
class ClosedLoopParams:
    """Gains of the closed loop. Defaults are the tuned solving point except
    for the stochastic kick, which stays off unless asked for (the search
    mechanism is the deterministic chaos, not noise)."""

    beta: float = 0.5
    xi: float = 2.0
    target: float = 0.2
    modulation: TargetModulation | None = None
    nonlinearity: Nonlinearity = Nonlinearity("cubic", "identity", pump=0.5)
    dt: float = 0.025
    noise: float = 0.0
    diffusion: float = 0.0

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.target <= 0:
            raise ValueError("target amplitude must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.diffusion < 0:
            raise ValueError("diffusion must be >= 0")


def solving_params(**overrides) -> ClosedLoopParams:
    """The benchmark configuration of the closed loop.

    Below-threshold pump with amplitude control gives sustained hopping over
    local minima; a small additive kick (diffusion) dissolves the rare stable
    heterogeneous states that survive the error correction, such as frozen
    domain-wall pairs on rings, without which a few percent of runs stall.
    """
    base = dict(
        beta=0.5,
        xi=2.0,
        target=0.2,
        nonlinearity=Nonlinearity("cubic", "identity", pump=0.5),
        dt=0.025,
        diffusion=0.1,
    )
    base.update(overrides)
    return ClosedLoopParams(**base)


@dataclass
class ClosedLoopState:
    x: np.ndarray
    log_e: np.ndarray
    a_current: float
    t: float
    rng: np.random.Generator
    best: SpinConfig
    best_step: int

    @property
    def e(self) -> np.ndarray:
        return np.exp(self.log_e)


def modulated_target(x: np.ndarray, params: ClosedLoopParams):
    """Smallest target >= the base that keeps the (x, e) divergence >= epsilon.

    Solves div(a) = sum f'(x_i) - xi * sum(g(x_i)^2 - a) >= epsilon for a,
    clipped below by the base target. Works on (n,) or batched (R, n) states.
    """
    if params.modulation is None:
        raise ValueError("modulated_target requires divergence modulation")
    nl = params.nonlinearity
    y2 = nl.g(x) ** 2
    need = (
        params.xi * y2.sum(axis=-1)
        - nl.f_prime(x).sum(axis=-1)
        + params.modulation.epsilon
    ) / (params.xi * x.shape[-1])
    return np.maximum(params.target, need)


def divergence_xe(x: np.ndarray, a, params: ClosedLoopParams):
    """Divergence of the flow in (x, e) coordinates (J has zero diagonal)."""
    nl = params.nonlinearity
    return nl.f_prime(x).sum(axis=-1) - params.xi * (
        (nl.g(x) ** 2) - np.asarray(a)[..., None]
    ).sum(axis=-1)


def divergence_xloge(x: np.ndarray, params: ClosedLoopParams):
    """Divergence in (x, log e) coordinates; differs by sum d(log e)/dt."""
    return params.nonlinearity.f_prime(x).sum(axis=-1)


def integrate_closedloop_ensemble(
    instance: IsingInstance,
    params: ClosedLoopParams,
    steps: int,
    seeds,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
    trace_writer: TrajectoryWriter | None = None,
):
    """One closed-loop trajectory per seed, batched over the run axis.

    Initial amplitudes are seeded uniform in (-1e-3, 1e-3) with e = 1 unless
    ``initial`` supplies explicit (x0, e0). Best-energy traces are updated at
    every step. A single run raises on numeric divergence; in a multi-run
    batch a diverged trajectory is frozen at its last finite state (keeping
    its best-so-far record) so the other runs are unaffected.
    Returns (X, log_E, a_last, generators, traces, failures) where failures
    lists (run_index, step) of frozen runs.
    """
    n = instance.n
    rngs = [np.random.default_rng(s) for s in seeds]
    runs = len(rngs)
    if runs == 0:
        raise ValueError("need at least one seed")
    if trace_writer is not None and runs != 1:
        raise ValueError("trajectory dump supports a single run only")
    nl = params.nonlinearity
    dt = params.dt

    if initial is not None:
        x0, e0 = initial
        X = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (runs, n)))
        if np.any(np.asarray(e0) <= 0):
            raise ValueError("initial error variables must be positive")
        log_E = np.array(np.broadcast_to(np.log(np.asarray(e0, dtype=float)), (runs, n)))
    else:
        X = 1e-3 * np.stack([rng.uniform(-1.0, 1.0, n) for rng in rngs])
        log_E = np.zeros((runs, n))

    tracker = _BestTracker(instance, runs)
    e0_energy = tracker.update(0, X)
    a_vec = np.full(runs, params.target)
    if trace_writer is not None:
        trace_writer.row(
            0, 0.0, float(e0_energy[0]), tracker.best[0], "",
            1.0, 1.0, float(a_vec[0]), float(divergence_xe(X, a_vec, params)[0]),
        )

    noisy = params.noise > 0
    kicked = params.diffusion > 0
    sq_dt = np.sqrt(dt)
    amp_bound = 50.0 * max(1.0, np.sqrt(params.target))
    dead = np.zeros(runs, dtype=bool)
    failures: list[tuple[int, int]] = []
    for k0 in range(0, steps, _NOISE_CHUNK):
        klen = min(_NOISE_CHUNK, steps - k0)
        eta = eta_d = None
        if noisy:
            eta = np.stack([rng.standard_normal((klen, n)) for rng in rngs], axis=1)
        if kicked:
            eta_d = np.stack([rng.standard_normal((klen, n)) for rng in rngs], axis=1)
        for j in range(klen):
            E = np.exp(log_E)
            if params.modulation is not None:
                a_vec = modulated_target(X, params)
            measured = X + params.noise * eta[j] if noisy else X
            drive = nl.f(X) + params.beta * E * instance.coupled_field(nl.g(measured))
            d_log = -params.xi * (nl.g(X) ** 2 - a_vec[:, None])
            X_new = X + drive * dt
            if kicked:
                X_new = X_new + params.diffusion * sq_dt * eta_d[j]
            log_new = log_E + d_log * dt
            step = k0 + j + 1
            with np.errstate(invalid="ignore"):
                bad = (
                    ~np.all(np.isfinite(X_new), axis=1)
                    | (np.max(np.abs(X_new), axis=1) > amp_bound)
                    | (np.max(np.abs(log_new), axis=1) > _MAX_LOG_E)
                )
            fresh = bad & ~dead
            if fresh.any():
                if runs == 1:
                    peak = float(np.max(np.abs(X_new)))
                    raise RuntimeError(
                        f"closed-loop state diverged at step {step} "
                        f"(max|x|={peak:.3g}, "
                        f"max|log e|={float(np.max(np.abs(log_new))):.3g})"
                    )
                failures.extend((int(r), step) for r in np.nonzero(fresh)[0])
                dead |= fresh
            if dead.any():
                keep = dead[:, None]
                X = np.where(keep, X, X_new)
                log_E = np.where(keep, log_E, log_new)
            else:
                X, log_E = X_new, log_new
            e_step = tracker.update(step, X)
            if trace_writer is not None:
                ecur = np.exp(log_E[0])
                trace_writer.row(
                    step, step * dt, float(e_step[0]), tracker.best[0], "",
                    float(ecur.min()), float(ecur.max()), float(a_vec[0]),
                    float(divergence_xe(X, a_vec, params)[0]),
                )

    return X, log_E, a_vec, rngs, tracker.traces(), failures


def integrate_closedloop(
    instance: IsingInstance,
    params: ClosedLoopParams,
    steps: int,
    seed,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
    trace_writer: TrajectoryWriter | None = None,
) -> tuple[ClosedLoopState, BestTrace]:
    X, log_E, a_vec, rngs, traces, _ = integrate_closedloop_ensemble(
        instance, params, steps, [seed], initial=initial, trace_writer=trace_writer
    )
    trace = traces[0]
    state = ClosedLoopState(
        x=X[0],
        log_e=log_E[0],
        a_current=float(a_vec[0]),
        t=steps * params.dt,
        rng=rngs[0],
        best=SpinConfig(spins=trace.best_spins, energy=trace.best_energy),
        best_step=trace.best_step,
    )
    return state, trace


def construct_fixed_point(
    instance: IsingInstance, spins, params: ClosedLoopParams
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form stationary point sitting on a strict local minimum of H.

    x_i = g^{-1}(s_i sqrt(a)) and e_i = -f(x_i) / (beta sqrt(a) h_i); raises
    if the configuration is not a strict local minimum or if the parameters
    put any error variable at or below zero.
    """
    s = np.asarray(spins, dtype=float)
    h = local_fields(instance, spins)
    slack = s * h
    if np.any(slack <= 0):
        bad = int(np.argmin(slack))
        raise ValueError(
            f"not a strict local minimum: s_i h_i = {slack[bad]:.3g} at spin {bad}"
        )
    nl = params.nonlinearity
    root_a = np.sqrt(params.target)
    x = nl.g_inverse(s * root_a)
    e = -nl.f(x) / (params.beta * root_a * h)
    if np.any(e <= 0):
        bad = int(np.argmin(e))
        raise ValueError(
            f"no positive error variable at spin {bad} (e = {e[bad]:.3g}); "
            "the parameter regime admits no such fixed point"
        )
    dx, de = closedloop_field(instance, params, x, e)
    resid = max(float(np.max(np.abs(dx))), float(np.max(np.abs(de))))
    if resid > 1e-10:
        raise ValueError(f"constructed point is not stationary (residual {resid:.3e})")
    return x, e


def closedloop_field(
    instance: IsingInstance, params: ClosedLoopParams, x, e, target: float | None = None
):
    """The raw (dx/dt, de/dt) vector field in (x, e) coordinates."""
    a = params.target if target is None else target
    nl = params.nonlinearity
    gx = nl.g(x)
    dx = nl.f(x) + params.beta * e * instance.coupled_field(gx)
    de = -params.xi * (gx**2 - a) * e
    return dx, de


def closedloop_jacobian(
    instance: IsingInstance, params: ClosedLoopParams, x, e, target: float | None = None
) -> np.ndarray:
    """Analytic 2n x 2n Jacobian of the (x, e) field at an arbitrary point."""
    a = params.target if target is None else target
    nl = params.nonlinearity
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    J = instance.dense()
    gx = nl.g(x)
    gp = nl.g_prime(x)
    A = np.diag(nl.f_prime(x)) + params.beta * (e[:, None] * J * gp[None, :])
    B = np.diag(params.beta * instance.coupled_field(gx))
    C = np.diag(-2.0 * params.xi * e * gx * gp)
    D = np.diag(-params.xi * (gx**2 - a))
    return np.block([[A, B], [C, D]])


def finite_difference_jacobian(
    instance: IsingInstance,
    params: ClosedLoopParams,
    x,
    e,
    target: float | None = None,
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference Jacobian of the same field; the independent check."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    n = x.size

    def field(z):
        dx, de = closedloop_field(instance, params, z[:n], z[n:], target=target)
        return np.concatenate([dx, de])

    z0 = np.concatenate([x, e])
    out = np.empty((2 * n, 2 * n))
    for i in range(2 * n):
        step = h * max(1.0, abs(z0[i]))
        zp = z0.copy()
        zm = z0.copy()
        zp[i] += step
        zm[i] -= step
        out[:, i] = (field(zp) - field(zm)) / (2.0 * step)
    return out


def unstable_dimension(
    instance: IsingInstance, spins, params: ClosedLoopParams
) -> int:
    """Number of Jacobian eigenvalues with positive real part at the fixed point."""
    x, e = construct_fixed_point(instance, spins, params)
    jac = closedloop_jacobian(instance, params, x, e)
    vals = np.linalg.eigvals(jac)
    scale = max(1.0, float(np.max(np.abs(jac))))
    return int(np.sum(vals.real > 1e-10 * scale))


def mu_spectrum(instance: IsingInstance, spins) -> np.ndarray:
    """Eigenvalues of J_ij / |h_i| at a strict local minimum, sorted descending.

    The matrix is similar to the symmetric D^{-1/2} J D^{-1/2} with
    D = diag(|h|), so the spectrum is real.
    """
    h = local_fields(instance, spins)
    if np.any(h == 0):
        raise ValueError("mu spectrum undefined: some local field is zero")
    d = 1.0 / np.sqrt(np.abs(h))
    sym = d[:, None] * instance.dense() * d[None, :]
    vals = np.linalg.eigvalsh(sym)
    return vals[::-1].copy()


@dataclass(frozen=True)
class StabilityReport:
    spins: SpinConfig
    mu: np.ndarray
    n_unstable: dict


def stability_report(
    instance: IsingInstance, spins, params: ClosedLoopParams, targets
) -> StabilityReport:
    """mu spectrum plus the unstable-manifold dimension over a target sweep."""
    config = SpinConfig(
        spins=np.asarray(spins, dtype=np.int8), energy=energy(instance, spins)
    )
    table = {}
    for a in targets:
        p = replace(params, target=float(a))
        table[float(a)] = unstable_dimension(instance, spins, p)
    return StabilityReport(spins=config, mu=mu_spectrum(instance, spins), n_unstable=table)
