"""Finite weighted vertex spaces and the adjacency-based topology adapter.

A :class:`Space` is a finite set of vertices ``{0, ..., n-1}`` carrying a
positive measure and a symmetric *reference adjacency*.  The reference
adjacency is the discrete stand-in for an ambient topology: it defines the
inner boundary of a vertex set and the "thickened complement" that plays
the role of the closure of the complement.  Locality of a quadratic form
is always judged against the reference adjacency of its space.
"""

import dataclasses
from collections import deque

import numpy as np

#: Canonical representation of a subset of vertices.
VertexSet = frozenset


def vertex_set(members) -> frozenset:
    """Normalize an iterable of vertex ids to a frozenset of ints."""
    return frozenset(int(x) for x in members)


def set_index(members) -> np.ndarray:
    """Sorted index array for a vertex set, usable for numpy fancy indexing."""
    if not members:
        return np.empty(0, dtype=np.intp)
    return np.fromiter(sorted(members), dtype=np.intp, count=len(members))


def normalize_edges(edges, n: int) -> frozenset:
    """Canonicalize an iterable of undirected edges to frozenset of (i, j), i < j.

    Rejects self-loops and out-of-range endpoints.
    """
    out = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise ValueError(f"self-loop ({i},{j}) is not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range for n={n}")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


@dataclasses.dataclass(frozen=True, eq=False)
class Space:
    """Vertex set with measure weights and a reference adjacency.

    Parameters
    ----------
    n : int
        Number of vertices (>= 1).
    m : array_like
        Strictly positive per-vertex measure weights, length ``n``.
    ref_edges : iterable of pairs
        Symmetric reference adjacency; stored as frozenset of ``(i, j)``
        with ``i < j``.  No self-loops.
    """

    n: int
    m: np.ndarray
    ref_edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a space needs at least one vertex")
        m = np.asarray(self.m, dtype=float).reshape(-1)
        if m.shape != (self.n,):
            raise ValueError(f"measure must have length {self.n}, got {m.shape}")
        if not np.all(m > 0):
            bad = int(np.argmin(m))
            raise ValueError(f"measure must be strictly positive; m[{bad}] = {m[bad]}")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "ref_edges", normalize_edges(self.ref_edges, self.n))
        nbrs = [set() for _ in range(self.n)]
        for i, j in self.ref_edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        object.__setattr__(self, "_neighbors", tuple(frozenset(s) for s in nbrs))

    @property
    def vertices(self) -> frozenset:
        return frozenset(range(self.n))

    def neighbors(self, x: int) -> frozenset:
        """Reference-adjacency neighbors of vertex ``x``."""
        return self._neighbors[x]

    def check_subset(self, A) -> frozenset:
        """Validate and normalize a vertex set; raises on out-of-range ids."""
        A = vertex_set(A)
        if A and (min(A) < 0 or max(A) >= self.n):
            raise ValueError(f"vertex set {sorted(A)} not contained in 0..{self.n - 1}")
        return A

    def boundary(self, A) -> frozenset:
        """Inner vertex boundary of ``A``: members with a neighbor outside ``A``."""
        A = self.check_subset(A)
        return frozenset(x for x in A if self._neighbors[x] - A)

    def thickened_complement(self, A) -> frozenset:
        """Complement of ``A`` together with the inner boundary of ``A``.

        Mirrors the closure of the complement: the returned set covers
        everything outside ``A`` and meets ``A`` exactly in ``boundary(A)``.
        """
        A = self.check_subset(A)
        return (self.vertices - A) | self.boundary(A)

    def closed_ball(self, center: int, radius: int) -> frozenset:
        """Vertices within reference-graph distance ``radius`` of ``center``."""
        if not (0 <= center < self.n):
            raise ValueError(f"center {center} out of range")
        if radius < 0:
            return frozenset()
        seen = {center}
        frontier = deque([(center, 0)])
        while frontier:
            x, d = frontier.popleft()
            if d == radius:
                continue
            for y in self._neighbors[x]:
                if y not in seen:
                    seen.add(y)
                    frontier.append((y, d + 1))
        return frozenset(seen)


def boundary(space: Space, A) -> frozenset:
    """Inner vertex boundary of ``A`` with respect to the reference adjacency."""
    return space.boundary(A)


def thickened_complement(space: Space, A) -> frozenset:
    """``A^c`` together with ``boundary(A)``; the discrete closed complement."""
    return space.thickened_complement(A)
