"""Shared linear algebra: Green operators (pseudo-inverses of forms) and
subspace arithmetic for spaces of field functionals.

The kernel of a Markovian Q is known exactly from structure: it is spanned
by the indicators of support-graph components without killing.  The Green
operator uses that structural kernel for range tests, a dense
eigendecomposition for small forms, and a sparse LU (augmented with kernel
constraints when Q is singular) for large ones.
"""

import dataclasses
import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Dense eigendecomposition below this size; sparse LU above.
DENSE_LIMIT = 1500
# Relative rank cutoff for pseudo-inverses (fraction of largest eigenvalue).
RANK_RTOL = 1e-12
# Relative tolerance for range-membership tests.
RANGE_RTOL = 1e-10
# Relative tolerance for subspace rank / containment decisions.
SUBSPACE_RTOL = 1e-10


class SingularSystemError(ValueError):
    """A Dirichlet sub-system has a component with no anchor (no solution)."""


def structural_kernel(form) -> np.ndarray:
    """Orthonormal kernel basis of Q: normalized indicators of unkilled components.

    Exact for Markovian forms, where f @ Q @ f = 0 forces f to be constant
    on every support component and zero wherever killing is present.
    """
    labels = form.component_labels()
    cols = []
    for c in range(int(labels.max()) + 1 if form.n else 0):
        mask = labels == c
        if not np.any(form.killing[mask] > 0):
            v = np.zeros(form.n)
            v[mask] = 1.0 / np.sqrt(mask.sum())
            cols.append(v)
    if not cols:
        return np.zeros((form.n, 0))
    return np.column_stack(cols)


class GreenOperator:
    """Symmetric pseudo-inverse of a form's matrix Q, with range tests.

    ``apply`` maps v to the unique x with Q x = v and x orthogonal to the
    kernel (valid for v in range(Q); inputs are projected onto the range).
    """

    def __init__(self, form, dense_limit: int = DENSE_LIMIT, refine: int = 1):
        self.form = form
        self.n = form.n
        self.refine = refine
        self.kernel = structural_kernel(form)
        self.nullity = self.kernel.shape[1]
        self._lock = threading.Lock()
        self._factor = None
        self._eig = None
        self._chol = None
        self._splu = None
        if self.n <= dense_limit:
            if self.nullity == 0:
                self._chol = scipy.linalg.cho_factor(form.dense_q())
            else:
                self._eigendecompose()
        else:
            Q = form.Q.tocsc()
            if self.nullity == 0:
                self._splu = spla.splu(Q)
                self._kkt = False
            else:
                N = sp.csc_matrix(self.kernel)
                Z = sp.csc_matrix((self.nullity, self.nullity))
                kkt = sp.bmat([[Q, N], [N.T, Z]], format="csc")
                self._splu = spla.splu(kkt)
                self._kkt = True

    def _eigendecompose(self):
        lam, V = np.linalg.eigh(self.form.dense_q())
        # The structural nullity is exact; split eigenpairs accordingly.
        r = self.nullity
        self._lam_pos = lam[r:]
        self._V_pos = V[:, r:]
        if self._lam_pos.size and self._lam_pos[0] <= 0:
            # PSD up to roundoff: guard against tiny negative eigenvalues.
            self._lam_pos = np.clip(self._lam_pos, 1e-300, None)
        self._eig = (lam, V)

    @property
    def rank(self) -> int:
        return self.n - self.nullity

    def in_range(self, v, rtol: float = RANGE_RTOL):
        """Whether v (vector or column stack) lies in range(Q) up to rtol."""
        v = np.asarray(v, dtype=float)
        if self.nullity == 0:
            return True if v.ndim == 1 else np.ones(v.shape[1], dtype=bool)
        coeff = self.kernel.T @ v
        leak = np.linalg.norm(coeff, axis=0)
        size = np.linalg.norm(v, axis=0)
        ok = leak <= rtol * np.maximum(size, 1e-300)
        return bool(ok) if v.ndim == 1 else ok

    def range_project(self, v) -> np.ndarray:
        """Orthogonal projection onto range(Q)."""
        v = np.asarray(v, dtype=float)
        if self.nullity == 0:
            return v
        return v - self.kernel @ (self.kernel.T @ v)

    def _base_solve(self, M: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, M)
        if self._eig is not None:
            if self._lam_pos.size == 0:
                return np.zeros_like(M)
            return self._V_pos @ ((self._V_pos.T @ M) / self._lam_pos[:, None])
        if not self._kkt:
            return self._splu.solve(M)
        rhs = np.vstack([M, np.zeros((self.nullity, M.shape[1]))])
        return self._splu.solve(rhs)[: self.n]

    def apply(self, v) -> np.ndarray:
        """Pseudo-inverse action Q^+ v (columns handled independently).

        Performs ``refine`` steps of iterative refinement, which brings the
        residual down to roundoff even for ill-conditioned grid forms.
        """
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        M = v.reshape(-1, 1) if single else v
        M = self.range_project(M)
        out = self._base_solve(M)
        Q = self.form.Q
        for _ in range(self.refine):
            resid = self.range_project(M - Q @ out)
            out = out + self._base_solve(resid)
        return out[:, 0] if single else out

    def gram(self, B1, B2=None) -> np.ndarray:
        """Covariance Gram matrix ``B1.T @ Q^+ @ B2`` of functional stacks."""
        B1 = np.atleast_2d(np.asarray(B1, dtype=float).T).T
        if B2 is None:
            G = self.apply(B1)
            K = B1.T @ G
            return 0.5 * (K + K.T)
        B2 = np.atleast_2d(np.asarray(B2, dtype=float).T).T
        return B1.T @ self.apply(B2)

    def variance(self, v) -> float:
        """Variance of the field functional represented by v."""
        v = np.asarray(v, dtype=float)
        return float(v @ self.apply(v))

    def sample_factor(self) -> np.ndarray:
        """Matrix L with L @ L.T = Q^+, for drawing field samples.

        Computed from the dense eigendecomposition; for large sparse forms
        this triggers a one-off dense factorization.
        """
        with self._lock:
            if self._factor is None:
                if self._eig is None:
                    self._eigendecompose()
                if self._lam_pos.size == 0:
                    self._factor = np.zeros((self.n, 0))
                else:
                    self._factor = self._V_pos / np.sqrt(self._lam_pos)[None, :]
                self._factor.flags.writeable = False
            return self._factor


def pinv_psd(K: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix with relative rank cutoff."""
    K = np.asarray(K, dtype=float)
    if K.size == 0:
        return K.copy()
    lam, V = np.linalg.eigh(0.5 * (K + K.T))
    cut = rtol * max(lam[-1], 0.0)
    inv = np.where(lam > cut, 1.0 / np.where(lam > cut, lam, 1.0), 0.0)
    return (V * inv) @ V.T


def orthonormal_columns(M: np.ndarray, rtol: float = SUBSPACE_RTOL) -> np.ndarray:
    """Orthonormal basis of the column space of M (SVD with relative cutoff)."""
    M = np.atleast_2d(np.asarray(M, dtype=float).T).T
    if M.shape[1] == 0 or not np.any(M):
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    keep = s > rtol * s[0]
    return U[:, keep]


def basis_rank(M: np.ndarray, rtol: float = SUBSPACE_RTOL) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float).T).T
    if M.shape[1] == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def containment_residual(U: np.ndarray, W: np.ndarray) -> float:
    """Largest relative distance of a column of W from span(U).

    U must have orthonormal columns; W columns are arbitrary nonzero
    vectors.  Returns 0 for an empty W.
    """
    if W.shape[1] == 0:
        return 0.0
    proj = U @ (U.T @ W) if U.shape[1] else np.zeros_like(W)
    res = np.linalg.norm(W - proj, axis=0)
    size = np.linalg.norm(W, axis=0)
    nz = size > 0
    if not np.any(nz):
        return 0.0
    return float(np.max(res[nz] / size[nz]))


def join_bases(U1: np.ndarray, U2: np.ndarray, rtol: float = SUBSPACE_RTOL) -> np.ndarray:
    """Orthonormal basis of span(U1) + span(U2)."""
    return orthonormal_columns(np.hstack([U1, U2]), rtol)


def meet_bases(U1: np.ndarray, U2: np.ndarray, tol: float = SUBSPACE_RTOL) -> np.ndarray:
    """Orthonormal basis of span(U1) & span(U2) via principal angles.

    Directions whose principal cosine is within ``tol`` of 1 are taken to
    be common to both subspaces.
    """
    if U1.shape[1] == 0 or U2.shape[1] == 0:
        return np.zeros((U1.shape[0], 0))
    C, s, _ = np.linalg.svd(U1.T @ U2)
    keep = s >= 1.0 - tol
    if not np.any(keep):
        return np.zeros((U1.shape[0], 0))
    return orthonormal_columns(U1 @ C[:, keep], tol)


@dataclasses.dataclass
class DirichletFactor:
    """Cached factorization of a principal submatrix Q[B, B]."""

    idx: np.ndarray           # sorted vertex indices of B
    solve: object             # callable rhs -> solution

    def __call__(self, rhs):
        return self.solve(rhs)


def factor_submatrix(form, B_idx: np.ndarray) -> DirichletFactor:
    """Factor Q[B, B], refusing structurally singular sub-systems.

    Q[B, B] is singular exactly when some support component of B carries
    neither killing nor an edge leaving B; that is detected exactly from
    the (w, k) decomposition before factoring.
    """
    nB = len(B_idx)
    if nB == 0:
        return DirichletFactor(B_idx, lambda rhs: np.zeros_like(np.asarray(rhs, dtype=float)))
    inB = np.zeros(form.n, dtype=bool)
    inB[B_idx] = True
    pos = -np.ones(form.n, dtype=np.intp)
    pos[B_idx] = np.arange(nB)

    anchor = form.killing[B_idx].copy()
    ei, ej, ew = form.edge_i, form.edge_j, form.edge_w
    both = inB[ei] & inB[ej]
    cross_i = inB[ei] & ~inB[ej]
    cross_j = ~inB[ei] & inB[ej]
    np.add.at(anchor, pos[ei[cross_i]], ew[cross_i])
    np.add.at(anchor, pos[ej[cross_j]], ew[cross_j])

    from .forms import _component_labels

    labels = _component_labels(nB, pos[ei[both]], pos[ej[both]])
    for c in range(int(labels.max()) + 1 if nB else 0):
        mask = labels == c
        if not np.any(anchor[mask] > 0):
            verts = B_idx[mask][:5].tolist()
            raise SingularSystemError(
                f"sub-system is singular: component containing vertices {verts} "
                "has no killing and no edge leaving the set"
            )

    Qbb = form.Q[B_idx][:, B_idx]
    if nB <= DENSE_LIMIT:
        c, low = scipy.linalg.cho_factor(Qbb.toarray())

        def solve(rhs, _c=c, _low=low):
            return scipy.linalg.cho_solve((_c, _low), np.asarray(rhs, dtype=float))
    else:
        lu = spla.splu(Qbb.tocsc())

        def solve(rhs, _lu=lu):
            return _lu.solve(np.asarray(rhs, dtype=float))

    return DirichletFactor(B_idx, solve)
