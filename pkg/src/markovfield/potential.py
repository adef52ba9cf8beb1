"""Potential-theoretic operators for Dirichlet forms.

Everything here is exact linear algebra: energies, spectra (supports of
Q f), harmonic extensions onto vertex sets (discrete Dirichlet problems),
potentials of measures, Green/pseudo-inverse applications, and trace forms
by Schur complement.
"""

import dataclasses
import threading
from collections import OrderedDict

import numpy as np

from . import linalg
from .forms import DirichletForm, restrict_measure, validate_markovian
from .linalg import GreenOperator, SingularSystemError, factor_submatrix
from .space import set_index

# Relative threshold below which entries of Q f count as zero in spectra.
SPECTRUM_RTOL = 1e-10

_green_cache = {}
_green_lock = threading.Lock()

_dirichlet_cache = OrderedDict()
_dirichlet_lock = threading.Lock()
_DIRICHLET_CACHE_SIZE = 128


def green_operator(form: DirichletForm) -> GreenOperator:
    """Shared Green operator for a form (factorizations are cached per form)."""
    key = id(form)
    with _green_lock:
        hit = _green_cache.get(key)
        if hit is not None and hit[0] is form:
            return hit[1]
    op = GreenOperator(form)
    with _green_lock:
        _green_cache[key] = (form, op)
        if len(_green_cache) > 256:
            _green_cache.pop(next(iter(_green_cache)))
    return op


def _dirichlet_factor(form, B_idx):
    key = (id(form), B_idx.tobytes())
    with _dirichlet_lock:
        hit = _dirichlet_cache.get(key)
        if hit is not None and hit[0] is form:
            _dirichlet_cache.move_to_end(key)
            return hit[1]
    factor = factor_submatrix(form, B_idx)
    with _dirichlet_lock:
        _dirichlet_cache[key] = (form, factor)
        while len(_dirichlet_cache) > _DIRICHLET_CACHE_SIZE:
            _dirichlet_cache.popitem(last=False)
    return factor


def energy(form: DirichletForm, f, g=None) -> float:
    """Bilinear energy E(f, g) = f @ Q @ g."""
    return form.energy(f, g)


@dataclasses.dataclass(frozen=True)
class Spectrum:
    """Support of Q f with the absolute threshold used to call entries zero."""

    members: frozenset
    threshold: float

    def __iter__(self):
        return iter(sorted(self.members))

    def __contains__(self, x):
        return x in self.members

    def __len__(self):
        return len(self.members)

    def __eq__(self, other):
        if isinstance(other, Spectrum):
            return self.members == other.members
        return self.members == frozenset(other)


def spectrum(form: DirichletForm, f, rtol: float = SPECTRUM_RTOL) -> Spectrum:
    """Smallest vertex set outside which E(f, .) vanishes on supported tests.

    Computed as the support of Q f, entries below ``rtol * max|Q f|``
    treated as zero.
    """
    qf = form.apply(np.asarray(f, dtype=float))
    peak = np.abs(qf).max() if qf.size else 0.0
    thr = rtol * peak
    members = frozenset(np.flatnonzero(np.abs(qf) > thr).tolist())
    return Spectrum(members, thr)


def hitting(form: DirichletForm, A, f) -> np.ndarray:
    """Harmonic extension of f from A: equal to f on A, Q-harmonic off A.

    Solves Q[B,B] h_B = -Q[B,A] f_A on B = complement(A).  Probabilistically
    this is x -> E_x f(Z at the first hit of A), with value 0 on the event
    the process dies first.
    """
    A = form.space.check_subset(A)
    f = np.asarray(f, dtype=float)
    if f.shape != (form.n,):
        raise ValueError(f"expected vector of length {form.n}")
    A_idx = set_index(A)
    B_idx = set_index(form.space.vertices - A)
    h = np.zeros(form.n)
    h[A_idx] = f[A_idx]
    if len(B_idx):
        rhs = -(form.Q[B_idx][:, A_idx] @ f[A_idx]) if len(A_idx) else np.zeros(len(B_idx))
        h[B_idx] = _dirichlet_factor(form, B_idx)(rhs)
    return h


def hitting_matrix(form: DirichletForm, A, F) -> np.ndarray:
    """Harmonic extension applied column-wise to a stack of functions."""
    A = form.space.check_subset(A)
    F = np.asarray(F, dtype=float)
    if F.shape[0] != form.n:
        raise ValueError(f"expected {form.n} rows")
    A_idx = set_index(A)
    B_idx = set_index(form.space.vertices - A)
    H = np.zeros_like(F)
    H[A_idx] = F[A_idx]
    if len(B_idx):
        if len(A_idx):
            rhs = -(form.Q[B_idx][:, A_idx] @ F[A_idx])
        else:
            rhs = np.zeros((len(B_idx), F.shape[1]))
        H[B_idx] = _dirichlet_factor(form, B_idx)(rhs)
    return H


def part_hitting(form: DirichletForm, U, A, f) -> np.ndarray:
    """Hit A before exiting U: harmonic extension with data f on A, 0 off U."""
    U = form.space.check_subset(U)
    A = form.space.check_subset(A)
    if not A <= U:
        raise ValueError(f"A must be contained in U; extra vertices {sorted(A - U)}")
    f = np.asarray(f, dtype=float)
    if f.shape != (form.n,):
        raise ValueError(f"expected vector of length {form.n}")
    A_idx = set_index(A)
    M_idx = set_index(U - A)
    h = np.zeros(form.n)
    h[A_idx] = f[A_idx]
    if len(M_idx):
        rhs = -(form.Q[M_idx][:, A_idx] @ f[A_idx]) if len(A_idx) else np.zeros(len(M_idx))
        h[M_idx] = _dirichlet_factor(form, M_idx)(rhs)
    return h


def potential(form: DirichletForm, mu) -> np.ndarray:
    """Potential U(mu): the function with E(U(mu), g) = sum_x g(x) mu(x) for all g.

    For singular (recurrent) forms the measure must be balanced (zero total
    mass on every unkilled component); the result is then the mean-zero
    gauge representative.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (form.n,):
        raise ValueError(f"expected measure vector of length {form.n}")
    op = green_operator(form)
    if not op.in_range(mu):
        coeff = op.kernel.T @ mu
        worst = int(np.argmax(np.abs(coeff)))
        raise ValueError(
            "measure is not balanced: unkilled component "
            f"{worst} has net mass {coeff[worst] * np.sqrt((op.kernel[:, worst] > 0).sum()):g}; "
            "no potential exists for a singular form"
        )
    return op.apply(mu)


def green_apply(form: DirichletForm, v) -> np.ndarray:
    """Pseudo-inverse action Q^+ v; rejects v outside range(Q)."""
    v = np.asarray(v, dtype=float)
    op = green_operator(form)
    ok = op.in_range(v)
    if not np.all(ok):
        raise ValueError("input is outside range(Q) for this singular form")
    return op.apply(v)


def trace_form(form: DirichletForm, S, ref_edges=None) -> DirichletForm:
    """Form induced on S by harmonic extension: the Schur complement onto S.

    The result satisfies E_S(phi, psi) = E(H phi, H psi) where H extends
    from S; its vertices are ``sorted(S)`` renumbered from 0.  ``ref_edges``
    sets the reference adjacency of the restricted space; by default the
    parent adjacency restricted to S is used.
    """
    S = form.space.check_subset(S)
    if not S:
        raise ValueError("trace set must be nonempty")
    if S == form.space.vertices:
        return form
    S_idx = set_index(S)
    B_idx = set_index(form.space.vertices - S)
    pos = {int(v): i for i, v in enumerate(S_idx)}
    try:
        factor = _dirichlet_factor(form, B_idx)
    except SingularSystemError as exc:
        raise SingularSystemError(
            f"cannot trace onto {sorted(S)[:8]}...: {exc}"
        ) from exc
    Qsb = form.Q[S_idx][:, B_idx].toarray()
    X = factor(Qsb.T)
    schur = form.Q[S_idx][:, S_idx].toarray() - Qsb @ X
    schur = 0.5 * (schur + schur.T)
    if ref_edges is None:
        ref_edges = frozenset(
            (pos[i], pos[j])
            for i, j in form.space.ref_edges
            if i in S and j in S
        )
    sub = restrict_measure(form.space, S, ref_edges)
    # Roundoff in the Schur complement scales with the parent entries, not
    # with the (possibly much smaller) result.
    parent_scale = float(np.abs(form.Q.data).max()) if form.Q.nnz else 1.0
    return validate_markovian(schur, space=sub, atol_rel=1e-10,
                              atol_abs=1e-12 * parent_scale, probes=0)


def exit_kernel(form: DirichletForm, U, A) -> np.ndarray:
    """Matrix p[x, y] = chance of exiting U at y in U^c before hitting A.

    Column y solves the Dirichlet problem with data 1 at y, 0 on the rest
    of U^c and on A.  Used to verify the first-passage decomposition of
    hitting operators.
    """
    U = form.space.check_subset(U)
    A = form.space.check_subset(A)
    out_idx = set_index(form.space.vertices - U)
    P = np.zeros((form.n, len(out_idx)))
    for col, y in enumerate(out_idx):
        e = np.zeros(form.n)
        e[y] = 1.0
        P[:, col] = part_hitting(form, (form.space.vertices - A), form.space.vertices - U, e)
    return P
