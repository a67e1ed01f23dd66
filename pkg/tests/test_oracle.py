from collections import Counter

import numpy as np
import pytest

from cimopt.instances import energy, generate_ring, generate_sk, make_instance
from cimopt.oracle import (
    CavitySpec,
    exact_cavity_magnetizations,
    exact_moments,
    exhaustive_ground_states,
)
from helpers import brute_force_energies, pair, triangle


def test_pair_ground_truth():
    truth = exhaustive_ground_states(pair(1.0))
    assert truth.ground_energy == -1.0
    assert truth.degeneracy == 2
    assert truth.ground_states.tolist() == [[-1, -1], [1, 1]]


def test_ring_ground_truth():
    truth = exhaustive_ground_states(generate_ring(16, -1))
    assert truth.ground_energy == -16.0
    assert truth.degeneracy == 2
    for state in truth.ground_states:
        assert np.all(state[:-1] == -state[1:])


def test_triangle_degeneracy():
    truth = exhaustive_ground_states(triangle(-1.0))
    assert truth.ground_energy == -1.0
    assert truth.degeneracy == 6


def test_ground_truth_matches_brute_force():
    rng = np.random.default_rng(8)
    for n in (3, 5, 8):
        J = rng.normal(size=(n, n))
        J = (J + J.T) / 2
        np.fill_diagonal(J, 0)
        inst = make_instance(J)
        truth = exhaustive_ground_states(inst)
        table = brute_force_energies(J)
        emin = min(e for _, e in table)
        assert truth.ground_energy == pytest.approx(emin, abs=1e-12)
        minimizers = sorted(tuple(s) for s, e in table if e == emin)
        assert [tuple(s) for s in truth.ground_states] == minimizers


def test_ground_truth_cap_and_determinism():
    with pytest.raises(ValueError):
        exhaustive_ground_states(generate_sk(25, 0))
    a = exhaustive_ground_states(generate_sk(12, 1))
    b = exhaustive_ground_states(generate_sk(12, 1))
    assert np.array_equal(a.ground_states, b.ground_states)


def test_spectrum_flip_symmetric():
    inst = generate_sk(8, 3)
    counts = Counter(e for _, e in brute_force_energies(inst.dense()))
    assert all(v % 2 == 0 for v in counts.values())


def test_moments_beta_zero():
    inst = generate_sk(10, 2)
    m = exact_moments(inst, 0.0)
    assert m.log_z == pytest.approx(10 * np.log(2.0), abs=1e-12)
    assert np.allclose(m.magnetizations, 0.0, atol=1e-14)


def test_moments_symmetry_forced_zero():
    inst = generate_sk(9, 5)
    m = exact_moments(inst, 1.3)
    assert np.allclose(m.magnetizations, 0.0, atol=1e-12)


def test_moments_validation():
    with pytest.raises(ValueError):
        exact_moments(generate_sk(21, 0), 1.0)
    with pytest.raises(ValueError):
        exact_moments(pair(), -0.5)


def test_clamped_pair_gives_tanh():
    m = exact_cavity_magnetizations(pair(1.0), 1.0, CavitySpec(clamp_spin=(0, 1)))
    assert m[0] == 1.0
    assert m[1] == pytest.approx(np.tanh(1.0), abs=1e-12)


def test_cavity_removed_edge_decouples():
    m = exact_cavity_magnetizations(pair(1.0), 0.7, CavitySpec(remove_edge=(0, 1)))
    assert np.allclose(m, 0.0, atol=1e-14)


def test_three_spin_path_hand_values():
    J = np.zeros((3, 3))
    J[0, 1] = J[1, 0] = 1.0
    J[1, 2] = J[2, 1] = 1.0
    inst = make_instance(J)
    beta = 0.5
    m = exact_cavity_magnetizations(inst, beta, CavitySpec(clamp_spin=(0, 1)))
    # with s0 = +1 the four remaining configs weight by exp(beta(s1 + s1 s2))
    z = np.exp(2 * beta) + 2.0 + np.exp(-2 * beta)
    m1 = (np.exp(2 * beta) - np.exp(-2 * beta)) / z
    m2 = (np.exp(2 * beta) + np.exp(-2 * beta) - 2.0) / z
    assert m[1] == pytest.approx(m1, abs=1e-12)
    assert m[2] == pytest.approx(m2, abs=1e-12)
    assert m[1] > m[2] > 0


def test_clamp_negation():
    inst = generate_sk(8, 13)
    up = exact_cavity_magnetizations(inst, 0.8, CavitySpec(clamp_spin=(2, 1)))
    down = exact_cavity_magnetizations(inst, 0.8, CavitySpec(clamp_spin=(2, -1)))
    assert np.allclose(up, -down, atol=1e-12)


def test_cavity_validation():
    with pytest.raises(ValueError):
        exact_cavity_magnetizations(pair(), 1.0, CavitySpec(clamp_spin=(5, 1)))
    with pytest.raises(ValueError):
        exact_cavity_magnetizations(pair(), 1.0, CavitySpec(clamp_spin=(0, 2)))
    with pytest.raises(ValueError):
        exact_cavity_magnetizations(pair(), 1.0, CavitySpec(remove_edge=(0, 0)))
    with pytest.raises(ValueError):
        exact_cavity_magnetizations(
            make_instance(np.zeros((3, 3))), 1.0, CavitySpec(remove_edge=(0, 1))
        )


def test_log_z_derivative_is_mean_energy():
    inst = generate_sk(10, 21)
    beta, h = 0.7, 1e-5
    lz_plus = exact_moments(inst, beta + h).log_z
    lz_minus = exact_moments(inst, beta - h).log_z
    numeric = (lz_plus - lz_minus) / (2 * h)
    table = brute_force_energies(inst.dense())
    energies = np.array([e for _, e in table])
    w = np.exp(-beta * (energies - energies.min()))
    mean_h = float((energies * w).sum() / w.sum())
    assert numeric == pytest.approx(-mean_h, abs=1e-6)


def test_large_beta_stable():
    tri = triangle(-1.0)
    truth = exhaustive_ground_states(tri)
    beta = 50.0
    m = exact_moments(tri, beta)
    expected = -beta * truth.ground_energy + np.log(truth.degeneracy)
    assert np.isfinite(m.log_z)
    assert m.log_z == pytest.approx(expected, abs=1e-10)
