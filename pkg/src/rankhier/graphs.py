"""Undirected graphs and the graph6 interchange format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import REAL, FieldMatrix


class Graph6Error(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: frozenset  # of sorted (i, j) tuples, i < j

    def __post_init__(self):
        if self.n_vertices < 0:
            raise ValueError("negative vertex count")
        norm = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError("self-loops are not allowed")
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices):
                raise ValueError(f"edge {e} out of range")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> FieldMatrix:
        w = np.zeros((self.n_vertices, self.n_vertices))
        for i, j in self.edges:
            w[i, j] = w[j, i] = 1.0
        return FieldMatrix(w, REAL, "symmetric")

    def complement(self) -> "Graph":
        n = self.n_vertices
        comp = {(i, j) for i in range(n) for j in range(i + 1, n)
                if (i, j) not in self.edges}
        return Graph(n, frozenset(comp))

    @staticmethod
    def from_edges(n: int, edges) -> "Graph":
        return Graph(n, frozenset((min(i, j), max(i, j)) for i, j in edges))

    @staticmethod
    def complete(n: int) -> "Graph":
        return Graph(n, frozenset((i, j) for i in range(n)
                                  for j in range(i + 1, n)))

    @staticmethod
    def cycle(n: int) -> "Graph":
        return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def parse_graph6(s: str) -> Graph:
    """Decode a standard graph6 string (single-byte header, n <= 62).

    The format packs the upper triangle of the adjacency matrix in column
    order, 6 bits per printable character offset by 63.
    """
    s = s.strip()
    if not s:
        raise Graph6Error("empty graph6 string")
    raw = [ord(ch) - 63 for ch in s]
    if any(v < 0 or v > 63 for v in raw):
        raise Graph6Error("graph6 characters must be in the range 63..126")
    n = raw[0]
    if n == 63:
        raise Graph6Error("multi-byte graph6 headers (n > 62) not supported")
    n_bits = n * (n - 1) // 2
    n_chars = (n_bits + 5) // 6
    body = raw[1:]
    if len(body) != n_chars:
        raise Graph6Error(
            f"expected {n_chars} body characters for n={n}, got {len(body)}")
    bits = []
    for v in body:
        bits.extend((v >> shift) & 1 for shift in range(5, -1, -1))
    if any(bits[n_bits:]):
        raise Graph6Error("nonzero padding bits")
    edges = []
    pos = 0
    for j in range(1, n):
        for i in range(j):
            if bits[pos]:
                edges.append((i, j))
            pos += 1
    return Graph.from_edges(n, edges)


def encode_graph6(g: Graph) -> str:
    n = g.n_vertices
    if n > 62:
        raise Graph6Error("only n <= 62 supported")
    bits = []
    for j in range(1, n):
        for i in range(j):
            bits.append(1 if (i, j) in g.edges else 0)
    while len(bits) % 6:
        bits.append(0)
    out = [chr(n + 63)]
    for pos in range(0, len(bits), 6):
        v = 0
        for b in bits[pos:pos + 6]:
            v = (v << 1) | b
        out.append(chr(v + 63))
    return "".join(out)


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p]
    return Graph.from_edges(n, edges)
