import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cimopt.instances import (
    DENSE_LIMIT,
    energy,
    generate_ring,
    generate_sk,
    instance_from_json_dict,
    instance_to_json_dict,
    is_local_minimum,
    load_instance_json,
    local_fields,
    make_instance,
    make_instance_from_edges,
    maxcut_convert,
    cut_value,
    round_spins,
    save_instance_json,
)
from helpers import brute_force_ground, pair, triangle


def random_instance(rng, n):
    J = rng.normal(size=(n, n))
    J = (J + J.T) / 2.0
    np.fill_diagonal(J, 0.0)
    return make_instance(J)


def test_energy_ferromagnetic_pair():
    assert energy(pair(1.0), [1, 1]) == -1.0
    assert energy(pair(1.0), [1, -1]) == 1.0


def test_energy_frustrated_triangle():
    tri = triangle(-1.0)
    assert energy(tri, [1, 1, -1]) == -1.0
    emin, states = brute_force_ground(tri.dense())
    assert emin == -1.0
    assert len(states) == 6


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 9))
def test_energy_global_flip_symmetry(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    s = rng.choice([-1, 1], size=n)
    assert energy(inst, s) == pytest.approx(energy(inst, -s), abs=1e-12)


def test_local_fields_examples():
    assert np.array_equal(local_fields(pair(1.0), [1, 1]), [1.0, 1.0])
    assert np.array_equal(local_fields(triangle(-1.0), [1, 1, -1]), [0.0, 0.0, -2.0])
    zero = make_instance(np.zeros((4, 4)))
    assert np.array_equal(local_fields(zero, [1, -1, 1, -1]), np.zeros(4))


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 9))
def test_flip_identity(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    s = rng.choice([-1, 1], size=n)
    h = local_fields(inst, s)
    base = energy(inst, s)
    for i in range(n):
        flipped = s.copy()
        flipped[i] = -flipped[i]
        assert energy(inst, flipped) - base == pytest.approx(2 * s[i] * h[i], abs=1e-9)


def test_is_local_minimum_examples():
    assert is_local_minimum(pair(1.0), [1, 1])
    assert not is_local_minimum(pair(1.0), [1, -1])
    assert is_local_minimum(triangle(-1.0), [1, 1, -1])


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_local_minimum_matches_flip_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n)
    s = rng.choice([-1, 1], size=n)
    base = energy(inst, s)
    by_flips = True
    for i in range(n):
        flipped = s.copy()
        flipped[i] = -flipped[i]
        if energy(inst, flipped) < base - 1e-12:
            by_flips = False
    assert is_local_minimum(inst, s) == by_flips


def test_generate_sk_deterministic_and_valid():
    a = generate_sk(12, 5)
    b = generate_sk(12, 5)
    assert np.array_equal(a.dense(), b.dense())
    J = a.dense()
    assert np.array_equal(J, J.T)
    assert np.all(np.diag(J) == 0.0)
    assert not np.array_equal(J, generate_sk(12, 6).dense())


def test_generate_sk_variance():
    n = 1000
    J = generate_sk(n, 0).dense()
    off = J[np.triu_indices(n, k=1)]
    assert abs(off.mean()) < 3.0 / n
    assert abs(off.var() - 1.0 / n) < 0.1 / n


def test_generate_sk_rejects_small():
    with pytest.raises(ValueError):
        generate_sk(1, 0)


def test_ring_ground_states():
    ring = generate_ring(16, -1)
    alt = np.array([(-1) ** i for i in range(16)])
    assert energy(ring, alt) == -16.0
    fm = generate_ring(4, 1)
    assert energy(fm, [1, 1, 1, 1]) == -4.0
    emin, states = brute_force_ground(generate_ring(10, -1).dense())
    assert emin == -10.0
    assert len(states) == 2


def test_ring_validation():
    with pytest.raises(ValueError):
        generate_ring(2, -1)
    with pytest.raises(ValueError):
        generate_ring(8, 2)


def test_round_spins():
    assert np.array_equal(round_spins([0.3, -2.1]), [1, -1])
    assert np.array_equal(round_spins([0.0, -0.5]), [1, -1])


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000), st.floats(1e-6, 1e6))
def test_round_spins_scale_invariant(seed, scale):
    x = np.random.default_rng(seed).normal(size=7)
    assert np.array_equal(round_spins(x), round_spins(scale * x))


def test_maxcut_single_edge():
    inst, offset = maxcut_convert(2, [(0, 1, 1.0)])
    assert offset == 1.0
    assert cut_value(offset, energy(inst, [1, -1])) == 1.0
    assert cut_value(offset, energy(inst, [1, 1])) == 0.0


def test_maxcut_triangle_best_cut():
    inst, offset = maxcut_convert(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
    emin, _ = brute_force_ground(inst.dense())
    assert cut_value(offset, emin) == 2.0


def test_maxcut_random_graph_brute_force():
    rng = np.random.default_rng(11)
    n = 12
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                edges.append((i, j, float(rng.integers(1, 5))))
    inst, offset = maxcut_convert(n, edges)

    def cut(bits):
        s = [(1 if (bits >> k) & 1 else -1) for k in range(n)]
        return sum(w for i, j, w in edges if s[i] != s[j])

    best_cut = max(cut(b) for b in range(1 << n))
    emin, _ = brute_force_ground(inst.dense())
    assert cut_value(offset, emin) == best_cut


def test_maxcut_rejects_bad_edges():
    with pytest.raises(ValueError):
        maxcut_convert(3, [(0, 0, 1.0)])
    with pytest.raises(ValueError):
        maxcut_convert(3, [(0, 1, 1.0), (1, 0, 2.0)])


def test_instance_validation():
    with pytest.raises(ValueError):
        make_instance(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        make_instance(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        make_instance(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        energy(pair(), [1, 1, 1])
    with pytest.raises(ValueError):
        energy(pair(), [1, 0])


def test_sparse_storage_above_limit():
    n = DENSE_LIMIT + 8
    edges = [(i, (i + 1) % n, -1.0) for i in range(n)]
    inst = make_instance_from_edges(n, edges)
    assert not inst.is_dense
    x = np.random.default_rng(0).normal(size=n)
    dense = inst.dense()
    assert np.allclose(inst.coupled_field(x), dense @ x)
    batch = np.random.default_rng(1).normal(size=(3, n))
    assert np.allclose(inst.coupled_field(batch), batch @ dense)
    i, j, w = inst.edge_arrays()
    assert len(w) == n
    assert np.all(i < j)


def test_json_round_trip(tmp_path):
    inst = generate_sk(10, 3)
    path = tmp_path / "inst.json"
    save_instance_json(inst, path)
    loaded = load_instance_json(path)
    assert np.allclose(loaded.dense(), inst.dense())
    assert loaded.label == inst.label
    negated = load_instance_json(path, negate=True)
    assert np.allclose(negated.dense(), -inst.dense())


def test_json_validation():
    with pytest.raises(ValueError):
        instance_from_json_dict({"n": 2})
    with pytest.raises(ValueError):
        instance_from_json_dict(
            {"n": 2, "edges": [[0, 1, 1.0]], "convention": "H=+sum"}
        )
    with pytest.raises(ValueError):
        instance_from_json_dict({"n": 2, "edges": [[1, 0, 1.0]]})
    data = instance_to_json_dict(pair(0.5))
    assert json.dumps(data)
    assert data["edges"] == [[0, 1, 0.5]]
