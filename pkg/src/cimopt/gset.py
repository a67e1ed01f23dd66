"""Reader/writer for the plain-text graph format used by MAXCUT benchmarks.

Layout: a header line "n m" followed by m lines "u v w" with 1-indexed
endpoints. Weights may be integers or reals and are emitted the way they
parse; integer-valued weights are written without a decimal point.
"""

from __future__ import annotations

from dataclasses import dataclass

from .instances import IsingInstance, maxcut_convert


@dataclass(frozen=True)
class GsetFile:
    n: int
    edges: tuple  # ((u, v, w), ...) with 1-indexed u < v


def _fail(line_no: int, message: str):
    raise ValueError(f"line {line_no}: {message}")


def parse_gset(text: str) -> GsetFile:
    lines = text.splitlines()
    content = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    if not content:
        raise ValueError("empty graph file")
    header_no, header = content[0]
    parts = header.split()
    if len(parts) != 2:
        _fail(header_no, f"header must be 'n m', got {header!r}")
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        _fail(header_no, f"header must hold two integers, got {header!r}")
    if n < 1 or m < 0:
        _fail(header_no, f"bad sizes n={n}, m={m}")
    body = content[1:]
    if len(body) != m:
        raise ValueError(
            f"header announces {m} edges but file contains {len(body)}"
        )
    edges = []
    for line_no, line in body:
        fields = line.split()
        if len(fields) != 3:
            _fail(line_no, f"edge line must be 'u v w', got {line!r}")
        try:
            u, v = int(fields[0]), int(fields[1])
            w = float(fields[2])
        except ValueError:
            _fail(line_no, f"cannot parse edge {line!r}")
        if u == v:
            _fail(line_no, f"self-loop on vertex {u}")
        if not (1 <= u <= n and 1 <= v <= n):
            _fail(line_no, f"vertex out of range in edge ({u},{v}) for n={n}")
        edges.append((min(u, v), max(u, v), w))
    return GsetFile(n=n, edges=tuple(edges))


def write_gset(graph: GsetFile) -> str:
    def fmt(w: float) -> str:
        return str(int(w)) if float(w).is_integer() else repr(w)

    rows = [f"{graph.n} {len(graph.edges)}"]
    rows.extend(f"{u} {v} {fmt(w)}" for u, v, w in graph.edges)
    return "\n".join(rows) + "\n"


def gset_to_instance(graph: GsetFile, label: str = "") -> tuple[IsingInstance, float]:
    """Convert to a 0-indexed Ising instance via the MAXCUT encoding."""
    zero_indexed = [(u - 1, v - 1, w) for u, v, w in graph.edges]
    instance, offset = maxcut_convert(graph.n, zero_indexed)
    if label:
        instance = IsingInstance(
            n=instance.n, couplings=instance.couplings, label=label
        )
    return instance, offset
