"""Shared test utilities: tiny independent oracles and instance builders."""

from itertools import product

import numpy as np

from cimopt.instances import IsingInstance, make_instance


def pair(j=1.0) -> IsingInstance:
    return make_instance(np.array([[0.0, j], [j, 0.0]]), label="pair")


def triangle(j=-1.0) -> IsingInstance:
    J = np.full((3, 3), j)
    np.fill_diagonal(J, 0.0)
    return make_instance(J, label="triangle")


def brute_force_energies(J: np.ndarray):
    """All (config, energy) pairs by direct summation; the reference oracle."""
    n = J.shape[0]
    out = []
    for bits in product((-1, 1), repeat=n):
        s = np.array(bits, dtype=float)
        out.append((np.array(bits, dtype=np.int8), float(-0.5 * s @ J @ s)))
    return out


def brute_force_ground(J: np.ndarray):
    table = brute_force_energies(J)
    emin = min(e for _, e in table)
    states = [s for s, e in table if e == emin]
    return emin, states


def random_tree_instance(n: int, rng) -> IsingInstance:
    """Random tree with couplings from {+-1, +-0.5} (random attachment)."""
    J = np.zeros((n, n))
    for v in range(1, n):
        u = int(rng.integers(0, v))
        w = float(rng.choice([-1.0, -0.5, 0.5, 1.0]))
        J[u, v] = J[v, u] = w
    return make_instance(J, label=f"tree{n}")


def tree_diameter(J: np.ndarray) -> int:
    n = J.shape[0]
    adj = [list(np.nonzero(J[i])[0]) for i in range(n)]

    def bfs(start):
        dist = {start: 0}
        frontier = [start]
        far = start
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
                        far = v
            frontier = nxt
        return far, dist

    far, _ = bfs(0)
    _, dist = bfs(far)
    return max(dist.values())


def greedy_local_minimum(J: np.ndarray, rng) -> np.ndarray:
    """Descend single flips to a local minimum from a random start."""
    n = J.shape[0]
    s = rng.choice([-1.0, 1.0], size=n)
    while True:
        h = J @ s
        i = int(np.argmin(s * h))
        if s[i] * h[i] >= 0:
            return s.astype(np.int8)
        s[i] = -s[i]


def strict_local_minima(J: np.ndarray, rng, tries: int = 60):
    """Sampled strict local minima (s_i h_i > 0 for all i), deduplicated."""
    seen = {}
    for _ in range(tries):
        s = greedy_local_minimum(J, rng)
        if np.all(s * (J @ s.astype(float)) > 0):
            key = tuple((s * s[0]).tolist())
            seen[key] = np.array(key, dtype=np.int8)
    return list(seen.values())
