"""Verifiers for Markov-type properties of Gaussian fields on graphs.

Each check produces a :class:`MarkovReport` with a scale-free violation
measure, so that verdicts at a given tolerance are meaningful across
forms.  ``equivalence_scan`` runs the locality <-> Markov comparison over
a corpus of forms and vertex sets, flagging any violation that lands in
the indeterminate band between "numerically zero" and "clearly nonzero".
"""

import dataclasses
import itertools
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import linalg
from .field import (
    EXACT_TOL,
    FunctionalSubspace,
    GaussianField,
    cond_indep,
    join,
    realize,
    sigma_field,
)
from .forms import is_local_wrt
from .potential import hitting_matrix

# Violations above this are treated as genuine failures; anything between
# the test tolerance and this floor is labeled indeterminate by the scan.
FAIL_FLOOR = 1e-4


@dataclasses.dataclass(frozen=True)
class MarkovReport:
    """Verdict of a single Markov-type check."""

    check: str
    set_a: frozenset
    set_b: frozenset | None
    holds: bool
    max_violation: float
    tol: float
    witness: dict | None = None

    def __bool__(self):
        return self.holds

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "set": sorted(self.set_a),
            "set_b": sorted(self.set_b) if self.set_b is not None else None,
            "verdict": "holds" if self.holds else "fails",
            "max_violation": self.max_violation,
            "tol": self.tol,
            "witness": self.witness,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _report(check, A, B, result) -> MarkovReport:
    return MarkovReport(
        check=check,
        set_a=frozenset(A),
        set_b=frozenset(B) if B is not None else None,
        holds=result.holds,
        max_violation=result.max_violation,
        tol=result.tol,
        witness=result.witness,
    )


def check_markov(field: GaussianField, A, tol: float = EXACT_TOL) -> MarkovReport:
    """Markov property at A: the field over A and the field over the
    thickened complement are conditionally independent given the boundary."""
    space = field.form.space
    A = space.check_subset(A)
    res = cond_indep(
        field,
        sigma_field(field, A),
        sigma_field(field, space.thickened_complement(A)),
        sigma_field(field, space.boundary(A)),
        tol,
    )
    return _report("markov", A, None, res)


def _harmonic_family(field: GaussianField, A, source_set):
    """Harmonic extensions onto A of a spanning family {f : spectrum(f) in source_set}.

    Returns (sources, functions, functionals): orthonormal functionals v_i
    spanning the sigma(source_set) subspace, the functions f_i = Q^+ v_i
    they index, and the functionals Q H_A f_i of the extensions.
    """
    W = sigma_field(field, source_set)
    if W.dim == 0:
        z = np.zeros((field.n, 0))
        return z, z, z
    funcs = field.green.apply(W.basis)
    if not A:
        # Conditioning on the trivial sigma-field: expectations are zero.
        out = np.zeros_like(funcs)
    else:
        out = field.form.apply(hitting_matrix(field.form, A, funcs))
    return W.basis, funcs, out


def check_spectrum_criterion(field: GaussianField, A, tol: float = EXACT_TOL) -> MarkovReport:
    """Spectrum form of the Markov property at A.

    For every f whose spectrum lies in the thickened complement of A, the
    conditional-expectation variable X over A must be measurable over the
    boundary: its functional must lie in the sigma(boundary) subspace.
    The violation is the largest relative variance of any such functional
    left unexplained by the boundary subspace.
    """
    space = field.form.space
    A = space.check_subset(A)
    bnd = sigma_field(field, space.boundary(A))
    sources, funcs, onto = _harmonic_family(field, A, space.thickened_complement(A))
    if onto.shape[1] == 0:
        return _report("spectrum-criterion", A, None,
                       _CIStub(True, 0.0, tol, None))
    g = field.green
    Gonto = g.apply(onto)
    total = np.einsum("ij,ij->j", onto, Gonto)
    if bnd.dim:
        # Explicit residual of the Q^+-orthogonal projection onto the
        # boundary subspace; variance differences would cancel
        # catastrophically for exact members.
        K = g.gram(bnd.basis)
        coef = linalg.pinv_psd(K) @ (bnd.basis.T @ Gonto)
        R = onto - bnd.basis @ coef
    else:
        R = onto
    resid = np.clip(np.einsum("ij,ij->j", R, g.apply(R)), 0.0, None)
    # A conditional expectation never exceeds the variance of its source
    # variable; columns whose variance is negligible on that scale are
    # almost-surely-constant variables, measurable over anything.
    source_var = np.einsum("ij,ij->j", sources, funcs)
    floor = (linalg.RANGE_RTOL ** 2) * np.maximum(source_var, 1e-300)
    live = total > floor
    ratio = np.where(live, resid / np.where(live, total, 1.0), 0.0)
    viol = np.sqrt(ratio)
    worst = int(np.argmax(viol))
    witness = None
    if viol[worst] > tol:
        qh = onto[:, worst]
        outside = sorted(
            x for x in np.flatnonzero(np.abs(qh) > 1e-12 * max(np.abs(qh).max(), 1e-300)).tolist()
            if x not in space.boundary(A)
        )
        witness = {
            "function": funcs[:, worst].tolist(),
            "support_outside_boundary": outside,
        }
    return _report("spectrum-criterion", A, None,
                   _CIStub(bool(viol[worst] <= tol), float(viol[worst]), tol, witness))


@dataclasses.dataclass(frozen=True)
class _CIStub:
    holds: bool
    max_violation: float
    tol: float
    witness: dict | None


def check_pseudo_markov(field: GaussianField, A, tol: float = EXACT_TOL) -> MarkovReport:
    """Domain-Markov control: inside and outside are conditionally
    independent given the harmonic-extension functionals, for every form,
    local or not."""
    space = field.form.space
    A = space.check_subset(A)
    sources, funcs, onto = _harmonic_family(field, A, space.thickened_complement(A))
    if onto.shape[1]:
        # Drop almost-surely-constant extension variables: their functionals
        # are pure roundoff and would otherwise pollute the conditioning
        # subspace with noise directions.
        total = np.einsum("ij,ij->j", onto, field.green.apply(onto))
        source_var = np.einsum("ij,ij->j", sources, funcs)
        onto = onto[:, total > (linalg.RANGE_RTOL ** 2) * np.maximum(source_var, 1e-300)]
    W = FunctionalSubspace.from_vectors(field, onto, check_range=False) \
        if onto.shape[1] else sigma_field(field, frozenset())
    res = cond_indep(
        field,
        sigma_field(field, A),
        sigma_field(field, space.thickened_complement(A)),
        W,
        tol,
    )
    return _report("pseudo-markov", A, None, res)


def check_two_set(field: GaussianField, A, B, tol: float = EXACT_TOL) -> MarkovReport:
    """Nested two-set Markov property: the field over A and the field over
    the thickened complement of B are conditionally independent given the
    field over their overlap, for B contained in A."""
    space = field.form.space
    A = space.check_subset(A)
    B = space.check_subset(B)
    if not B <= A:
        raise ValueError(f"B must be contained in A; extra vertices {sorted(B - A)}")
    S2 = space.thickened_complement(B)
    res = cond_indep(
        field,
        sigma_field(field, A),
        sigma_field(field, S2),
        sigma_field(field, A & S2),
        tol,
    )
    return _report("two-set", A, B, res)


def check_sigma_join_identity(field: GaussianField, A, B, tol: float = EXACT_TOL) -> MarkovReport:
    """Join decomposition of sigma-fields for nested sets B inside A:
    sigma(thick(A)) joined with sigma(A & thick(B)) equals sigma(thick(B)).

    The violation is the larger of the two mutual containment residuals.
    """
    space = field.form.space
    A = space.check_subset(A)
    B = space.check_subset(B)
    if not B <= A:
        raise ValueError(f"B must be contained in A; extra vertices {sorted(B - A)}")
    left = join(
        sigma_field(field, space.thickened_complement(A)),
        sigma_field(field, A & space.thickened_complement(B)),
    )
    right = sigma_field(field, space.thickened_complement(B))
    r1 = right.covering_residual(left)
    r2 = left.covering_residual(right)
    worst = max(r1, r2)
    witness = None
    if worst > tol:
        witness = {"left_dim": left.dim, "right_dim": right.dim,
                   "left_in_right": r1, "right_in_left": r2}
    return _report("sigma-join", A, B, _CIStub(worst <= tol, worst, tol, witness))


def _all_proper_subsets(n):
    verts = list(range(n))
    for r in range(1, n):
        for combo in itertools.combinations(verts, r):
            yield frozenset(combo)


def default_scan_sets(form, max_exhaustive: int = 12, n_sampled: int = 200, seed: int = 0):
    """Nonempty proper subsets to scan: exhaustive for small spaces,
    uniformly sampled otherwise."""
    n = form.n
    if n <= max_exhaustive:
        return list(_all_proper_subsets(n))
    rng = np.random.default_rng(seed)
    sets = set()
    while len(sets) < n_sampled:
        size = int(rng.integers(1, n))
        sets.add(frozenset(rng.choice(n, size=size, replace=False).tolist()))
    return sorted(sets, key=lambda s: (len(s), sorted(s)))


def crossing_sets(form):
    """Candidate witness sets around each off-reference edge: the closed
    reference ball of each endpoint, which keeps that endpoint interior
    while the other endpoint stays outside."""
    space = form.space
    extra = form.edge_set() - space.ref_edges
    out = []
    for u, v in sorted(extra):
        for x, y in ((u, v), (v, u)):
            ball = space.closed_ball(x, 1)
            if y not in ball and ball != space.vertices:
                out.append(ball)
    return out


@dataclasses.dataclass(frozen=True)
class ScanRow:
    name: str
    n: int
    is_local: bool
    n_sets: int
    all_hold: bool
    max_violation: float
    witness_set: frozenset | None
    witness_violation: float
    n_indeterminate: int
    coherent: bool

    def to_dict(self):
        return {
            "name": self.name,
            "n": self.n,
            "is_local": self.is_local,
            "n_sets": self.n_sets,
            "all_hold": self.all_hold,
            "max_violation": self.max_violation,
            "witness_set": sorted(self.witness_set) if self.witness_set else None,
            "witness_violation": self.witness_violation,
            "n_indeterminate": self.n_indeterminate,
            "coherent": self.coherent,
        }


@dataclasses.dataclass(frozen=True)
class ScanResult:
    rows: tuple
    tol: float
    fail_floor: float

    @property
    def ok(self) -> bool:
        """Locality and the all-sets Markov verdict agree everywhere, no
        indeterminate violations, and both criteria concur on each cell."""
        return all(
            row.coherent
            and row.n_indeterminate == 0
            and (row.all_hold if row.is_local
                 else (not row.all_hold and row.witness_set is not None))
            for row in self.rows
        )

    def to_csv(self) -> str:
        header = ("name,n,is_local,n_sets,all_hold,max_violation,"
                  "witness_set,witness_violation,n_indeterminate,coherent")
        lines = [header]
        for row in self.rows:
            ws = "" if row.witness_set is None else ";".join(map(str, sorted(row.witness_set)))
            lines.append(
                f"{row.name},{row.n},{row.is_local},{row.n_sets},{row.all_hold},"
                f"{row.max_violation:.6e},{ws},{row.witness_violation:.6e},"
                f"{row.n_indeterminate},{row.coherent}"
            )
        return "\n".join(lines) + "\n"


def _scan_cell(field, A, tol):
    rep_m = check_markov(field, A, tol)
    rep_s = check_spectrum_criterion(field, A, tol)
    return rep_m, rep_s


def equivalence_scan(forms, sets=None, tol: float = EXACT_TOL,
                     fail_floor: float = FAIL_FLOOR, workers: int = 1) -> ScanResult:
    """Compare locality against the all-sets Markov property over a corpus.

    ``forms`` is a list of DirichletForm or (name, form) pairs.  For each
    form the Markov and spectrum criteria are evaluated on every scan set
    (plus, for nonlocal forms, the candidate sets crossing each
    off-reference edge); the row records whether all sets passed, the
    worst witness found, and whether the two criteria agreed everywhere.
    """
    rows = []
    for entry in forms:
        if isinstance(entry, tuple):
            name, form = entry
        else:
            name, form = repr(entry), entry
        field = realize(form, seed=0)
        local = is_local_wrt(form)
        scan_sets = list(sets) if sets is not None else default_scan_sets(form)
        scan_sets = [form.space.check_subset(s) for s in scan_sets]
        for extra in crossing_sets(form):
            if extra not in scan_sets:
                scan_sets.append(extra)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda A: _scan_cell(field, A, tol), scan_sets))
        else:
            results = [_scan_cell(field, A, tol) for A in scan_sets]

        all_hold = True
        max_viol = 0.0
        witness, witness_viol = None, 0.0
        n_indet = 0
        coherent = True
        for A, (rep_m, rep_s) in zip(scan_sets, results):
            if rep_m.holds != rep_s.holds:
                coherent = False
            v = rep_m.max_violation
            max_viol = max(max_viol, v)
            if not rep_m.holds:
                all_hold = False
                if tol < v < fail_floor:
                    n_indet += 1
                elif v > witness_viol:
                    witness, witness_viol = A, v
        rows.append(ScanRow(
            name=name, n=form.n, is_local=local, n_sets=len(scan_sets),
            all_hold=all_hold, max_violation=max_viol,
            witness_set=witness, witness_violation=witness_viol,
            n_indeterminate=n_indet, coherent=coherent,
        ))
    return ScanResult(tuple(rows), tol, fail_floor)
