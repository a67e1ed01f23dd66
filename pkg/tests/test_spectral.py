import numpy as np
import pytest

from cimopt.instances import energy, generate_ring, generate_sk, make_instance, make_instance_from_edges
from cimopt.spectral import extreme_eigenpair, min_eigvec_heuristic
from cimopt.oracle import exhaustive_ground_states
from helpers import pair


def test_pair_eigenpair_exact():
    res = min_eigvec_heuristic(pair(1.0))
    assert res.eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert res.residual <= 1e-10 * 2.0
    # the rounded configuration is one of the two exact ground states
    assert res.rounded.energy == -1.0


def test_ring_top_eigenvalue_despite_orthogonal_start():
    # the all-ones start vector has zero overlap with the alternating
    # eigenvector; the perturbed start must still find lambda_max = 2
    ring = generate_ring(16, -1)
    lam, vec, resid, _ = extreme_eigenpair(ring, "max")
    assert lam == pytest.approx(2.0, abs=1e-9)
    assert resid <= 1e-10 * ring.norm_inf()
    alt = np.array([(-1.0) ** i for i in range(16)]) / 4.0
    assert abs(vec @ alt) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_sk_matches_dense_eigensolver(seed):
    inst = generate_sk(30, seed)
    lam, vec, resid, _ = extreme_eigenpair(inst, "max")
    ref_vals, ref_vecs = np.linalg.eigh(inst.dense())
    assert lam == pytest.approx(ref_vals[-1], abs=1e-9)
    assert abs(vec @ ref_vecs[:, -1]) == pytest.approx(1.0, abs=1e-7)
    assert resid <= 1e-8 * inst.norm_inf()


def test_min_eigenpair_side():
    inst = generate_sk(24, 9)
    lam, _, _, _ = extreme_eigenpair(inst, "min")
    assert lam == pytest.approx(np.linalg.eigvalsh(inst.dense())[0], abs=1e-9)


def test_flip_of_eigenvector_rounds_to_same_energy():
    inst = generate_sk(18, 4)
    res = min_eigvec_heuristic(inst)
    flipped_energy = energy(inst, -res.rounded.spins)
    assert flipped_energy == res.rounded.energy


def test_zero_matrix():
    inst = make_instance(np.zeros((5, 5)))
    lam, vec, resid, _ = extreme_eigenpair(inst, "max")
    assert lam == 0.0 and resid == 0.0
    assert np.linalg.norm(vec) == pytest.approx(1.0)


def test_sparse_instance_eigenpair():
    n = 600
    rng = np.random.default_rng(2)
    edges = []
    seen = set()
    while len(edges) < 5 * n:
        i, j = sorted(rng.integers(0, n, size=2))
        if i != j and (i, j) not in seen:
            seen.add((i, j))
            edges.append((i, j, float(rng.choice([-1.0, 1.0]))))
    inst = make_instance_from_edges(n, edges)
    lam, vec, resid, _ = extreme_eigenpair(inst, "max")
    ref = np.linalg.eigvalsh(inst.dense())[-1]
    assert lam == pytest.approx(ref, rel=1e-8)
    assert resid <= 1e-8 * inst.norm_inf()


def test_heuristic_energy_above_ground():
    for seed in range(5):
        inst = generate_sk(14, seed + 50)
        res = min_eigvec_heuristic(inst)
        truth = exhaustive_ground_states(inst)
        assert res.rounded.energy >= truth.ground_energy - 1e-9
