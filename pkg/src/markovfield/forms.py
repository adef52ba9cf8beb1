"""Dirichlet forms on finite weighted spaces.

A form is a symmetric positive-semidefinite matrix ``Q`` with nonpositive
off-diagonal entries and nonnegative row sums.  Those two sign conditions
are the finite-space normal-contraction (Markovian) property, and they
decompose ``Q`` exactly into nonnegative edge weights ``w`` and killing
weights ``k``:

    Q[x, y] = -w[x, y]            (x != y)
    Q[x, x] = sum_y w[x, y] + k[x]

The energy of a pair of functions is ``E(f, g) = f @ Q @ g``.
"""

import dataclasses

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .space import Space, set_index

# Dense mirror of Q is cached only below this size (memory guard).
DENSE_CACHE_LIMIT = 1500


class NotMarkovianError(ValueError):
    """Raised when a matrix fails the Markovian sign conditions.

    Carries a ``witness`` attribute: a function f with
    E(clip(f,0,1), clip(f,0,1)) > E(f, f) when one was found, else None.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclasses.dataclass(eq=False)
class DirichletForm:
    """Validated Markovian quadratic form tied to a :class:`Space`.

    Construct through :func:`form_from_components` or
    :func:`validate_markovian`; the constructor trusts its inputs.
    """

    space: Space
    Q: sp.csr_matrix
    edge_i: np.ndarray      # edge endpoints with edge_i < edge_j
    edge_j: np.ndarray
    edge_w: np.ndarray      # strictly positive weights
    killing: np.ndarray     # nonnegative, length n

    def __post_init__(self):
        for name in ("edge_i", "edge_j", "edge_w", "killing"):
            arr = getattr(self, name)
            arr.flags.writeable = False
        self._dense = None

    @property
    def n(self) -> int:
        return self.space.n

    def dense_q(self) -> np.ndarray:
        """Dense copy of Q (cached for small forms)."""
        if self._dense is not None:
            return self._dense
        d = self.Q.toarray()
        if self.n <= DENSE_CACHE_LIMIT:
            d.flags.writeable = False
            self._dense = d
        return d

    def energy(self, f, g=None) -> float:
        """Bilinear energy ``f @ Q @ g`` (quadratic when ``g`` is omitted)."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {f.shape}")
        if g is None:
            g = f
        else:
            g = np.asarray(g, dtype=float)
            if g.shape != (self.n,):
                raise ValueError(f"expected vector of length {self.n}, got {g.shape}")
        return float(f @ (self.Q @ g))

    def apply(self, f) -> np.ndarray:
        """Matrix action ``Q @ f`` (f may be a vector or a column stack)."""
        return self.Q @ np.asarray(f, dtype=float)

    def decompose(self):
        """Return ``((i, j, w), k)``: edge arrays and killing weights."""
        return (self.edge_i, self.edge_j, self.edge_w), self.killing

    def edge_set(self) -> frozenset:
        """Unordered support of the off-diagonal part of Q."""
        return frozenset(zip(self.edge_i.tolist(), self.edge_j.tolist()))

    def component_labels(self) -> np.ndarray:
        """Connected-component label per vertex of the weight graph of Q."""
        return _component_labels(self.n, self.edge_i, self.edge_j)

    def __repr__(self):
        return (f"DirichletForm(n={self.n}, edges={len(self.edge_w)}, "
                f"killed={int(np.count_nonzero(self.killing))})")


def _component_labels(n, edge_i, edge_j) -> np.ndarray:
    if len(edge_i) == 0:
        return np.arange(n)
    adj = sp.coo_matrix(
        (np.ones(len(edge_i)), (edge_i, edge_j)), shape=(n, n)
    )
    _, labels = connected_components(adj, directed=False)
    return labels


def _assemble(space: Space, edge_i, edge_j, edge_w, killing) -> DirichletForm:
    n = space.n
    edge_i = np.asarray(edge_i, dtype=np.intp)
    edge_j = np.asarray(edge_j, dtype=np.intp)
    edge_w = np.asarray(edge_w, dtype=float)
    killing = np.asarray(killing, dtype=float)
    rows = np.concatenate([edge_i, edge_j, np.arange(n)])
    cols = np.concatenate([edge_j, edge_i, np.arange(n)])
    diag = killing.copy()
    np.add.at(diag, edge_i, edge_w)
    np.add.at(diag, edge_j, edge_w)
    vals = np.concatenate([-edge_w, -edge_w, diag])
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    Q.sum_duplicates()
    return DirichletForm(space, Q, edge_i, edge_j, edge_w, killing)


def _normalize_weights(space: Space, w):
    """Accept a {(i, j): w} dict or an iterable of (i, j, w) triples."""
    if isinstance(w, dict):
        items = [(i, j, val) for (i, j), val in w.items()]
    else:
        items = [(e[0], e[1], e[2]) for e in w]
    seen = {}
    for i, j, val in items:
        i, j = int(i), int(j)
        val = float(val)
        if i == j:
            raise ValueError(f"edge weight on self-loop ({i},{i})")
        if not (0 <= i < space.n and 0 <= j < space.n):
            raise ValueError(f"edge ({i},{j}) out of range")
        if val < 0:
            raise ValueError(f"negative edge weight w[{i},{j}] = {val}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge ({key[0]},{key[1]})")
        seen[key] = val
    pairs = sorted((k, v) for k, v in seen.items() if v > 0)
    ei = np.array([p[0][0] for p in pairs], dtype=np.intp)
    ej = np.array([p[0][1] for p in pairs], dtype=np.intp)
    ew = np.array([p[1] for p in pairs], dtype=float)
    return ei, ej, ew


def form_from_components(space: Space, w, k) -> DirichletForm:
    """Assemble a form from nonnegative edge weights and killing weights.

    Parameters
    ----------
    space : Space
    w : dict or iterable
        Edge weights, ``{(i, j): weight}`` or triples ``(i, j, weight)``.
        Weights must be nonnegative; zero-weight edges are dropped.
    k : array_like or dict
        Nonnegative killing weights (dict entries default the rest to 0).
    """
    if isinstance(k, dict):
        kv = np.zeros(space.n)
        for i, val in k.items():
            kv[int(i)] = float(val)
        k = kv
    else:
        k = np.asarray(k, dtype=float).reshape(-1)
        if k.shape != (space.n,):
            raise ValueError(f"killing must have length {space.n}, got {k.shape}")
    if np.any(k < 0):
        bad = int(np.argmin(k))
        raise ValueError(f"negative killing weight k[{bad}] = {k[bad]}")
    ei, ej, ew = _normalize_weights(space, w)
    return _assemble(space, ei, ej, ew, k.copy())


def _contraction_witness(Qd: np.ndarray):
    """Construct an explicit contraction violation for a non-Markovian Q.

    Returns a vector f with E(clip(f,0,1)) > E(f,f), or None.
    """
    n = Qd.shape[0]
    off = Qd - np.diag(np.diag(Qd))
    pos = np.argwhere(off > 0)
    if len(pos):
        x, y = pos[0]
        f = np.zeros(n)
        f[x], f[y] = 1.0, -1.0
        g = np.clip(f, 0.0, 1.0)
        if g @ Qd @ g > f @ Qd @ f:
            return f
    rowsum = Qd.sum(axis=1)
    neg = np.argwhere(rowsum < 0).reshape(-1)
    for x in neg:
        qxx = Qd[x, x]
        eps = 1.0 if qxx <= 0 else min(1.0, -rowsum[x] / qxx)
        f = np.ones(n)
        f[x] += eps
        g = np.clip(f, 0.0, 1.0)
        if g @ Qd @ g > f @ Qd @ f:
            return f
    return None


def validate_markovian(Q, space: Space = None, *, atol_rel: float = 1e-12,
                       atol_abs: float = 0.0,
                       probes: int = 1000, seed: int = 0) -> DirichletForm:
    """Check the Markovian sign conditions and return the decomposed form.

    Accepts iff Q is symmetric with off-diagonal entries <= 0 and row sums
    >= 0, up to ``max(atol_rel * scale(Q), atol_abs)``; sub-tolerance
    violations are clipped to exact zeros during decomposition.  The
    absolute floor matters when Q was computed from larger quantities
    (e.g. a Schur complement), whose roundoff does not shrink with the
    result.  As a cross-check, ``probes`` random unit contractions
    ``clip(f, 0, 1)`` are verified not to increase energy.

    When ``space`` is omitted, a unit-measure space whose reference
    adjacency equals the off-diagonal support of Q is used, so the result
    is local with respect to its own space.
    """
    if sp.issparse(Q):
        Qd = Q.toarray()
    else:
        Qd = np.array(Q, dtype=float)
    if Qd.ndim != 2 or Qd.shape[0] != Qd.shape[1]:
        raise ValueError(f"Q must be square, got shape {Qd.shape}")
    n = Qd.shape[0]
    scale = max(np.abs(np.diag(Qd)).max() if n else 0.0, np.abs(Qd).max(), 1e-300)
    atol = max(atol_rel * scale, atol_abs)
    asym = np.abs(Qd - Qd.T).max()
    if asym > atol:
        raise NotMarkovianError(f"Q is not symmetric: max |Q - Q^T| = {asym:g}")
    Qd = 0.5 * (Qd + Qd.T)

    off = Qd.copy()
    np.fill_diagonal(off, 0.0)
    worst_off = off.max() if n > 1 else 0.0
    rowsum = Qd.sum(axis=1)
    worst_row = -rowsum.min()
    if worst_off > atol or worst_row > atol:
        witness = _contraction_witness(Qd)
        parts = []
        if worst_off > atol:
            x, y = np.unravel_index(np.argmax(off), off.shape)
            parts.append(f"positive off-diagonal Q[{x},{y}] = {off[x, y]:g}")
        if worst_row > atol:
            x = int(np.argmin(rowsum))
            parts.append(f"negative row sum {rowsum[x]:g} at vertex {x}")
        raise NotMarkovianError("not Markovian: " + "; ".join(parts), witness=witness)

    ii, jj = np.nonzero(np.triu(off < -atol, k=1))
    ew = -off[ii, jj]
    kv = np.clip(rowsum, 0.0, None)
    kv[kv <= atol] = 0.0

    if space is None:
        space = Space(n, np.ones(n), frozenset(zip(ii.tolist(), jj.tolist())))
    elif space.n != n:
        raise ValueError(f"space has {space.n} vertices but Q is {n}x{n}")
    form = _assemble(space, ii, jj, ew, kv)

    if probes > 0 and n > 0:
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((probes, n)) * rng.uniform(0.5, 2.0, size=(probes, 1))
        g = np.clip(f, 0.0, 1.0)
        ef = np.einsum("ij,ij->i", f, (form.Q @ f.T).T)
        eg = np.einsum("ij,ij->i", g, (form.Q @ g.T).T)
        bad = eg > ef * (1 + 1e-12) + atol
        if np.any(bad):
            idx = int(np.argmax(eg - ef))
            raise NotMarkovianError(
                f"contraction probe violated: E(clip f)={eg[idx]:g} > E(f)={ef[idx]:g}",
                witness=f[idx],
            )
    return form


def is_local_wrt(form: DirichletForm) -> bool:
    """True iff every nonzero off-diagonal of Q lies on the reference adjacency."""
    return form.edge_set() <= form.space.ref_edges


@dataclasses.dataclass(frozen=True)
class Classification:
    """Connectivity and conservativeness of a form.

    ``transient`` means every component carries killing (Q nonsingular);
    ``recurrent`` means no component does (kernel of Q = locally constant
    functions).  Mixed reducible forms have both flags False.
    """

    irreducible: bool
    transient: bool
    recurrent: bool
    n_components: int
    component_killed: tuple

    @property
    def nullity(self) -> int:
        return sum(1 for killed in self.component_killed if not killed)

    def __str__(self):
        conn = "irreducible" if self.irreducible else "reducible"
        if self.transient:
            cons = "transient"
        elif self.recurrent:
            cons = "recurrent"
        else:
            cons = "mixed"
        return f"{cons} {conn}"


def classify(form: DirichletForm) -> Classification:
    """Classify a form by support-graph connectivity and killing pattern."""
    labels = form.component_labels()
    ncomp = int(labels.max()) + 1 if form.n else 0
    killed = []
    for c in range(ncomp):
        killed.append(bool(np.any(form.killing[labels == c] > 0)))
    return Classification(
        irreducible=(ncomp == 1),
        transient=all(killed),
        recurrent=not any(killed),
        n_components=ncomp,
        component_killed=tuple(killed),
    )


def restrict_measure(space: Space, S, ref_edges) -> Space:
    """Space on the sorted vertices of ``S`` inheriting the measure of ``space``."""
    idx = set_index(space.check_subset(S))
    return Space(len(idx), space.m[idx], ref_edges)
