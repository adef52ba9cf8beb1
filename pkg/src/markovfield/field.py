"""The Gaussian field of a Dirichlet form and its sigma-field calculus.

The field assigns to every function f a centered Gaussian variable X_f
with Cov(X_f, X_g) = E(f, g).  Concretely a field sample is a vector h
with covariance Q^+, and X_f is realized as (Q f) . h; a *functional* is
any vector v in range(Q), representing the variable v . h.

Sigma-fields of vertex sets are represented, up to null sets, as linear
subspaces of functionals: sigma(A) corresponds to the functionals
supported in A (and orthogonal to the kernel of Q, which in the singular
case pins the mean-zero gauge).  Joins, meets, conditional expectations
and conditional-independence tests are all exact operations on these
subspaces in the Q^+ inner product.
"""

import dataclasses

import numpy as np

from . import linalg
from .forms import DirichletForm
from .potential import green_operator, hitting
from .space import set_index

#: Default tolerance for exact conditional-independence verdicts.
EXACT_TOL = 1e-9


class FieldMismatchError(ValueError):
    """Subspaces or samples from different fields were combined."""


@dataclasses.dataclass(eq=False)
class GaussianField:
    """Realized Gaussian field: exact covariance algebra plus a sampler."""

    form: DirichletForm
    seed: int = 0

    def __post_init__(self):
        self.green = green_operator(self.form)

    @property
    def n(self) -> int:
        return self.form.n

    def functional_of(self, f) -> np.ndarray:
        """Functional vector of X_f, namely Q f."""
        return self.form.apply(np.asarray(f, dtype=float))

    def covariance(self, f, g=None) -> float:
        """Cov(X_f, X_g) = E(f, g), exactly."""
        return self.form.energy(f, g)

    def functional_covariance(self, u, v=None) -> float:
        """Cov(u . h, v . h) = u @ Q^+ @ v for functionals u, v."""
        u = np.asarray(u, dtype=float)
        if v is None:
            return self.green.variance(u)
        return float(u @ self.green.apply(np.asarray(v, dtype=float)))

    def sample_batch(self, N: int, seed=None) -> np.ndarray:
        """N independent field samples h (rows), deterministic per (seed, N)."""
        if N < 1:
            raise ValueError("need at least one sample")
        if seed is None:
            seed = self.seed
        L = self.green.sample_factor()
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((int(N), L.shape[1]))
        return Z @ L.T

    def evaluate(self, samples, f) -> np.ndarray:
        """Values of X_f on a batch of samples."""
        v = self.functional_of(f)
        return np.asarray(samples, dtype=float) @ v


def realize(form: DirichletForm, seed: int = 0) -> GaussianField:
    """Construct the Gaussian field of a form with a base sampling seed."""
    return GaussianField(form, int(seed))


class FunctionalSubspace:
    """Linear subspace of field functionals, the stand-in for a sigma-field.

    Stores an orthonormal basis (columns) of vectors in range(Q).
    """

    def __init__(self, field: GaussianField, basis: np.ndarray):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != field.n:
            raise ValueError(f"basis must be {field.n} x r")
        self.field = field
        self.basis = basis
        self.basis.flags.writeable = False

    @classmethod
    def from_vectors(cls, field: GaussianField, vectors, check_range: bool = True):
        """Subspace spanned by the given functional vectors (rank-filtered)."""
        M = np.atleast_2d(np.asarray(vectors, dtype=float))
        if M.shape[0] != field.n and M.shape[1] == field.n:
            M = M.T
        if M.shape[0] != field.n:
            raise ValueError(f"vectors must have length {field.n}")
        if check_range and M.shape[1]:
            ok = field.green.in_range(M, linalg.RANGE_RTOL)
            if not np.all(ok):
                bad = int(np.argmin(ok))
                raise ValueError(
                    f"vector {bad} is not in range(Q): it is not a functional "
                    "of this (singular) field"
                )
        return cls(field, linalg.orthonormal_columns(M))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def contains_vector(self, v, rtol: float = linalg.SUBSPACE_RTOL) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1, 1)
        return linalg.containment_residual(self.basis, v) <= rtol

    def covering_residual(self, other) -> float:
        """Largest relative defect of other's basis vectors from this subspace."""
        _same_field(self, other)
        return linalg.containment_residual(self.basis, other.basis)

    def is_subspace_of(self, other, rtol: float = linalg.SUBSPACE_RTOL) -> bool:
        return other.covering_residual(self) <= rtol

    def __repr__(self):
        return f"FunctionalSubspace(dim={self.dim}, n={self.field.n})"


def _same_field(W1, W2):
    if W1.field is not W2.field:
        raise FieldMismatchError("subspaces belong to different fields")


def zero_subspace(field: GaussianField) -> FunctionalSubspace:
    return FunctionalSubspace(field, np.zeros((field.n, 0)))


def sigma_field(field: GaussianField, A) -> FunctionalSubspace:
    """Subspace of functionals supported in A (in range(Q)).

    For a nonsingular form this is span{e_x : x in A}.  When Q has kernel
    directions (unkilled components), functionals must balance to zero on
    each one; the basis below uses orthonormal Helmert-style difference
    vectors within every affected component.
    """
    A = field.form.space.check_subset(A)
    if not A:
        return zero_subspace(field)
    labels = field.form.component_labels()
    killedflags = [bool(np.any(field.form.killing[labels == c] > 0))
                   for c in range(int(labels.max()) + 1)]
    cols = []
    by_comp = {}
    for x in sorted(A):
        by_comp.setdefault(int(labels[x]), []).append(x)
    for c, verts in sorted(by_comp.items()):
        if killedflags[c]:
            for x in verts:
                e = np.zeros(field.n)
                e[x] = 1.0
                cols.append(e)
        else:
            # Orthonormal mean-zero ladder over the component's vertices in A.
            for j in range(1, len(verts)):
                v = np.zeros(field.n)
                v[verts[:j]] = 1.0
                v[verts[j]] = -float(j)
                cols.append(v / np.sqrt(j * (j + 1)))
    if not cols:
        return zero_subspace(field)
    return FunctionalSubspace(field, np.column_stack(cols))


def join(W1: FunctionalSubspace, W2: FunctionalSubspace) -> FunctionalSubspace:
    """Span of the union of two subspaces."""
    _same_field(W1, W2)
    return FunctionalSubspace(W1.field, linalg.join_bases(W1.basis, W2.basis))


def meet(W1: FunctionalSubspace, W2: FunctionalSubspace) -> FunctionalSubspace:
    """Intersection of two subspaces (principal-angle computation)."""
    _same_field(W1, W2)
    return FunctionalSubspace(W1.field, linalg.meet_bases(W1.basis, W2.basis))


def cond_expect(field: GaussianField, f, A) -> np.ndarray:
    """Functional of E[X_f | sigma(A)]; equals Q applied to the harmonic
    extension of f onto A, and coincides with the orthogonal projection of
    the functional of X_f onto sigma(A) in the Q^+ inner product."""
    h = hitting(field.form, A, np.asarray(f, dtype=float))
    return field.form.apply(h)


def project_functional(field: GaussianField, v, W: FunctionalSubspace) -> np.ndarray:
    """Orthogonal projection of functional v onto W in the Q^+ inner product."""
    if W.dim == 0:
        return np.zeros(field.n)
    B = W.basis
    K = field.green.gram(B)
    rhs = B.T @ field.green.apply(np.asarray(v, dtype=float))
    return B @ (linalg.pinv_psd(K) @ rhs)


@dataclasses.dataclass(frozen=True)
class CondIndepResult:
    """Outcome of a conditional-independence test between subspaces."""

    holds: bool
    max_violation: float
    tol: float
    witness: dict | None = None

    def __bool__(self):
        return self.holds


def cond_indep(field: GaussianField, U: FunctionalSubspace, V: FunctionalSubspace,
               W: FunctionalSubspace, tol: float = EXACT_TOL) -> CondIndepResult:
    """Test conditional independence of the Gaussian families U and V given W.

    For centered jointly Gaussian families this is equivalent to the
    vanishing of the partial covariance block
    K_UV - K_UW K_WW^+ K_WV, with K the Q^+ Gram.  Entries are normalized
    by conditional standard deviations; directions that are conditionally
    degenerate given W are excluded.  Returns the largest normalized entry
    and the verdict ``max_violation <= tol``.
    """
    for X in (U, V):
        _same_field(X, W)
    _same_field(U, V)
    if U.dim == 0 or V.dim == 0:
        return CondIndepResult(True, 0.0, tol)
    g = field.green
    stack = np.hstack([U.basis, V.basis, W.basis])
    G = g.apply(stack)
    du, dv = U.dim, V.dim
    K = stack.T @ G
    K = 0.5 * (K + K.T)
    Kuu = K[:du, :du]
    Kvv = K[du:du + dv, du:du + dv]
    Kuv = K[:du, du:du + dv]
    Kuw = K[:du, du + dv:]
    Kvw = K[du:du + dv, du + dv:]
    Kww = K[du + dv:, du + dv:]
    if W.dim:
        Kwinv = linalg.pinv_psd(Kww)
        P = Kuv - Kuw @ (Kwinv @ Kvw.T)
        cu = np.diag(Kuu) - np.einsum("ij,ij->i", Kuw @ Kwinv, Kuw)
        cv = np.diag(Kvv) - np.einsum("ij,ij->i", Kvw @ Kwinv, Kvw)
    else:
        P = Kuv
        cu = np.diag(Kuu).copy()
        cv = np.diag(Kvv).copy()
    scale = max(np.diag(Kuu).max(initial=0.0), np.diag(Kvv).max(initial=0.0), 0.0)
    floor = linalg.RANK_RTOL * max(scale, 1e-300)
    cu = np.where(cu > floor, cu, np.nan)
    cv = np.where(cv > floor, cv, np.nan)
    denom = np.sqrt(np.outer(cu, cv))
    with np.errstate(invalid="ignore"):
        R = np.abs(P) / denom
    if np.all(np.isnan(R)):
        return CondIndepResult(True, 0.0, tol)
    flat = np.nanargmax(R)
    i, j = np.unravel_index(flat, R.shape)
    worst = float(R[i, j])
    witness = None
    if worst > tol:
        witness = {
            "u_col": int(i),
            "v_col": int(j),
            "partial_covariance": float(P[i, j]),
            "u_support": sorted(np.flatnonzero(np.abs(U.basis[:, i]) > 1e-12).tolist()),
            "v_support": sorted(np.flatnonzero(np.abs(V.basis[:, j]) > 1e-12).tolist()),
        }
    return CondIndepResult(worst <= tol, worst, tol, witness)


def sample_batch(field: GaussianField, N: int, seed=None) -> np.ndarray:
    """Module-level alias for :meth:`GaussianField.sample_batch`."""
    return field.sample_batch(N, seed)


def conditional_resample(field: GaussianField, W: FunctionalSubspace,
                         base: np.ndarray, n_draws: int, seed: int) -> np.ndarray:
    """Redraw the field holding the functionals in W at their base values.

    Uses the Gaussian update h' = g + Q^+ W K^+ (W'h - W'g) with g a fresh
    independent sample, which leaves the conditional law given the
    W-functionals invariant while resampling everything orthogonal.
    """
    base = np.asarray(base, dtype=float).reshape(-1)
    fresh = field.sample_batch(n_draws, seed)
    if W.dim == 0:
        return fresh
    B = W.basis
    GB = field.green.apply(B)
    K = B.T @ GB
    Kinv = linalg.pinv_psd(0.5 * (K + K.T))
    corr = (base @ B - fresh @ B) @ Kinv @ GB.T
    return fresh + corr
