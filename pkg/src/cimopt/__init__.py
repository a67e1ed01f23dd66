"""Ising optimization: analog amplitude dynamics, message passing, exact oracles."""

from .instances import (
    IsingInstance,
    SpinConfig,
    energy,
    generate_ring,
    generate_sk,
    is_local_minimum,
    load_instance_json,
    local_fields,
    make_instance,
    make_instance_from_edges,
    maxcut_convert,
    round_spins,
    rounded_config,
    save_instance_json,
)
from .openloop import (
    BestTrace,
    LogNoiseDecay,
    Nonlinearity,
    Schedule,
    first_mode_alignment,
    fixed_point_residual,
    integrate_openloop,
    integrate_openloop_ensemble,
    lyapunov_value,
    threshold_gain,
)
from .feedback import (
    ClosedLoopParams,
    TargetModulation,
    construct_fixed_point,
    integrate_closedloop,
    integrate_closedloop_ensemble,
    mu_spectrum,
    stability_report,
    unstable_dimension,
)
from .messages import bp_energy_readout, bp_run, tap_run
from .oracle import (
    CavitySpec,
    exact_cavity_magnetizations,
    exact_moments,
    exhaustive_ground_states,
)
from .spectral import extreme_eigenpair, min_eigvec_heuristic
from .bench import (
    BenchRecord,
    SuccessCurve,
    iterations_to_solution,
    per_instance_ns,
    percentiles,
    run_grid,
    success_probability,
)

__version__ = "0.1.0"
