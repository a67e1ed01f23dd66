"""Ising problem instances, the canonical energy, and instance generators.

Energy convention used everywhere in this package:

    H(s) = -1/2 * sum_ij J_ij s_i s_j,    s_i in {-1, +1}

so a positive coupling J_ij > 0 favors aligned spins (ferromagnetic).
Problems stated in the opposite convention can be loaded with J -> -J
(see ``load_instance_json(..., negate=True)`` and the CLI ``--negate-j``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

# Instances larger than this are stored as sparse adjacency (CSR); dense
# below. Both storages sit behind the same IsingInstance interface.
DENSE_LIMIT = 512

JSON_CONVENTION = "H=-1/2*sum(J*s*s)"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class IsingInstance:
    """Symmetric pairwise couplings with zero diagonal.

    ``couplings`` is a dense ndarray for small instances and a CSR array for
    large sparse ones; use :meth:`coupled_field`, :meth:`edge_arrays` and
    :meth:`dense` instead of touching the storage directly.
    """

    n: int
    couplings: np.ndarray | sp.csr_array
    label: str = ""

    @property
    def is_dense(self) -> bool:
        return isinstance(self.couplings, np.ndarray)

    def coupled_field(self, x: np.ndarray) -> np.ndarray:
        """J @ x along the last axis; x may be (n,) or batched (..., n)."""
        if self.is_dense:
            return x @ self.couplings
        if x.ndim == 1:
            return self.couplings @ x
        return (self.couplings @ x.T).T

    def dense(self) -> np.ndarray:
        if self.is_dense:
            return self.couplings
        return self.couplings.toarray()

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero couplings as parallel arrays (i, j, J_ij) with i < j."""
        if self.is_dense:
            iu, ju = np.nonzero(np.triu(self.couplings, k=1))
            return iu, ju, self.couplings[iu, ju]
        coo = sp.triu(sp.csr_matrix(self.couplings), k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def norm_inf(self) -> float:
        """Max absolute row sum of J."""
        if self.is_dense:
            return float(np.abs(self.couplings).sum(axis=1).max())
        return float(abs(self.couplings).sum(axis=1).max())


@dataclass(frozen=True)
class SpinConfig:
    """A +-1 configuration together with its energy."""

    spins: np.ndarray
    energy: float

    @classmethod
    def from_spins(cls, instance: IsingInstance, spins: np.ndarray) -> "SpinConfig":
        s = _validated_spins(instance, spins)
        return cls(spins=s, energy=energy(instance, s))


def make_instance(couplings: np.ndarray, label: str = "") -> IsingInstance:
    """Build an instance from a dense coupling matrix, validating invariants."""
    J = np.asarray(couplings, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {J.shape}")
    n = J.shape[0]
    if n < 1:
        raise ValueError("instance needs at least one spin")
    if not np.array_equal(J, J.T):
        raise ValueError("coupling matrix must be symmetric")
    if np.any(np.diagonal(J) != 0.0):
        raise ValueError("coupling matrix must have zero diagonal")
    if n > DENSE_LIMIT:
        stored: np.ndarray | sp.csr_array = sp.csr_array(J)
    else:
        stored = J.copy()
        stored.setflags(write=False)
    return IsingInstance(n=n, couplings=stored, label=label)


def make_instance_from_edges(
    n: int, edges, label: str = ""
) -> IsingInstance:
    """Build an instance from (i, j, J_ij) triples, 0-indexed, i != j."""
    if n < 1:
        raise ValueError("instance needs at least one spin")
    rows, cols, vals = [], [], []
    seen = set()
    for i, j, w in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-coupling on spin {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range for n={n}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen.add(key)
        rows += [i, j]
        cols += [j, i]
        vals += [float(w), float(w)]
    if n > DENSE_LIMIT:
        J = sp.csr_array(
            sp.coo_array((vals, (rows, cols)), shape=(n, n), dtype=float)
        )
        return IsingInstance(n=n, couplings=J, label=label)
    J = np.zeros((n, n))
    J[rows, cols] = vals
    return make_instance(J, label=label)


def _validated_spins(instance: IsingInstance, spins) -> np.ndarray:
    s = np.asarray(spins)
    if s.shape != (instance.n,):
        raise ValueError(f"expected {instance.n} spins, got shape {s.shape}")
    s = s.astype(np.int8, copy=True)
    if not np.all(np.abs(s) == 1):
        raise ValueError("spins must be exactly +-1")
    return s


def energy(instance: IsingInstance, spins) -> float:
    """H(s) = -1/2 s.(J s)."""
    s = _validated_spins(instance, spins).astype(float)
    return float(-0.5 * s @ instance.coupled_field(s))


def energies_of_batch(instance: IsingInstance, spins: np.ndarray) -> np.ndarray:
    """Energies of a (R, n) batch of +-1 rows, without per-row validation."""
    s = spins.astype(float, copy=False)
    return -0.5 * np.einsum("ri,ri->r", instance.coupled_field(s), s)


def local_fields(instance: IsingInstance, spins) -> np.ndarray:
    """h_i = sum_j J_ij s_j, so flipping spin i changes H by 2 s_i h_i."""
    s = _validated_spins(instance, spins).astype(float)
    return instance.coupled_field(s)


def is_local_minimum(instance: IsingInstance, spins) -> bool:
    """True iff no single spin flip strictly lowers H (s_i h_i >= 0 for all i)."""
    s = _validated_spins(instance, spins).astype(float)
    return bool(np.all(s * instance.coupled_field(s) >= 0.0))


def round_spins(x) -> np.ndarray:
    """Sign rounding of real amplitudes; zeros map to +1 (deterministic)."""
    x = np.asarray(x)
    return np.where(x >= 0.0, 1, -1).astype(np.int8)


def rounded_config(instance: IsingInstance, x) -> SpinConfig:
    """Round amplitudes and score the result."""
    return SpinConfig.from_spins(instance, round_spins(x))


def generate_sk(n: int, seed) -> IsingInstance:
    """Fully connected Gaussian instance: J_ij ~ N(0, 1/n), i < j, symmetric."""
    if n < 2:
        raise ValueError("SK instance needs n >= 2")
    rng = np.random.default_rng(seed)
    J = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    J[iu] = rng.normal(0.0, 1.0 / np.sqrt(n), size=len(iu[0]))
    J = J + J.T
    return make_instance(J, label=f"sk-n{n}-seed{seed}")


def generate_ring(n: int, sign: int) -> IsingInstance:
    """Nearest-neighbor ring with periodic boundary; sign=-1 is antiferromagnetic."""
    if n < 3:
        raise ValueError("ring needs n >= 3")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    edges = [(i, (i + 1) % n, float(sign)) for i in range(n)]
    kind = "af" if sign < 0 else "fm"
    return make_instance_from_edges(n, edges, label=f"ring-{kind}-n{n}")


def maxcut_convert(n: int, edges) -> tuple[IsingInstance, float]:
    """Encode MAXCUT on a weighted graph as an Ising instance.

    With J_ij = -w_ij and offset W = sum of all weights,
    cut(s) = (W - H(s)) / 2, so minimizing H maximizes the cut.
    Edges are (u, v, w) triples, 0-indexed, no self-loops, no duplicates.
    """
    ising_edges = []
    offset = 0.0
    for u, v, w in edges:
        ising_edges.append((u, v, -float(w)))
        offset += float(w)
    instance = make_instance_from_edges(n, ising_edges, label=f"maxcut-n{n}")
    return instance, offset


def cut_value(offset: float, ising_energy: float) -> float:
    """Cut weight of a configuration given its Ising energy under maxcut_convert."""
    return (offset - ising_energy) / 2.0


def instance_to_json_dict(instance: IsingInstance) -> dict:
    i, j, w = instance.edge_arrays()
    return {
        "schema_version": SCHEMA_VERSION,
        "n": instance.n,
        "edges": [[int(a), int(b), float(x)] for a, b, x in zip(i, j, w)],
        "convention": JSON_CONVENTION,
        "label": instance.label,
    }


def save_instance_json(instance: IsingInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_json_dict(instance), indent=1))


def instance_from_json_dict(data: dict, negate: bool = False) -> IsingInstance:
    for key in ("n", "edges"):
        if key not in data:
            raise ValueError(f"instance JSON missing required key {key!r}")
    convention = data.get("convention", JSON_CONVENTION)
    if convention != JSON_CONVENTION:
        raise ValueError(
            f"unsupported convention {convention!r}; expected {JSON_CONVENTION!r}"
        )
    n = int(data["n"])
    sign = -1.0 if negate else 1.0
    edges = []
    for entry in data["edges"]:
        if len(entry) != 3:
            raise ValueError(f"edge entry {entry!r} must be [i, j, J]")
        i, j, w = entry
        if not (int(i) < int(j)):
            raise ValueError(f"edge ({i},{j}) must satisfy i < j")
        edges.append((int(i), int(j), sign * float(w)))
    return make_instance_from_edges(n, edges, label=str(data.get("label", "")))


def load_instance_json(path, negate: bool = False) -> IsingInstance:
    return instance_from_json_dict(json.loads(Path(path).read_text()), negate=negate)
