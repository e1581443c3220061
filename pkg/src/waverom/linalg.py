"""Symmetric dense linear algebra shared by every other module.

Everything downstream (operator discretization, Gram-matrix processing,
spectral measures, block recursions) funnels through the handful of
primitives collected here:

* :class:`SymMatrix` -- a validated symmetric matrix wrapper,
* :class:`EigDecomposition` -- an orthonormal eigendecomposition with
  ascending eigenvalues,
* :class:`JacobiMatrix` -- a symmetric tridiagonal matrix with strictly
  positive off-diagonal entries,
* :func:`sym_eig`, :func:`tridiag_eig` -- eigendecompositions with an
  explicit reconstruction guarantee,
* :func:`cholesky` -- a lower-triangular factorization that reports the
  offending pivot when the matrix is not positive definite,
* :func:`apply_matrix_function` -- evaluation of ``f(A) @ x`` through an
  eigendecomposition,
* :func:`condition_number` -- spectral condition number with an infinity
  convention for singular input,
* :func:`reduce_generalized` -- congruence reduction of a symmetric pencil
  to a single symmetric matrix.

The eigensolvers delegate to LAPACK (via numpy/scipy); the contracts the
rest of the package relies on -- ordering, orthonormality, reconstruction
accuracy, failure reporting -- are enforced locally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = [
    "SymMatrix",
    "EigDecomposition",
    "JacobiMatrix",
    "sym_eig",
    "tridiag_eig",
    "cholesky",
    "apply_matrix_function",
    "condition_number",
    "reduce_generalized",
]

#: Relative Frobenius-norm bound for ``V diag(w) V^T`` reconstructing ``A``.
RECONSTRUCTION_RTOL = 1e-10

#: Absolute floor protecting eigenvalue ratios against division by zero.
_ABS_FLOOR = 1e-300


@dataclass(frozen=True)
class SymMatrix:
    """A square matrix with exact entrywise symmetry.

    Symmetry is enforced at construction: ``entries[i, j] == entries[j, i]``
    must hold exactly.  Floating-point assemblies that are only symmetric up
    to rounding should go through :meth:`from_array`, which symmetrizes by
    averaging (an exact operation in IEEE arithmetic as far as the symmetry
    of the result is concerned).
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("matrix entries must be finite")
        if not np.array_equal(a, a.T):
            raise ValueError(
                "matrix is not exactly symmetric; use SymMatrix.from_array "
                "to symmetrize a floating-point assembly"
            )
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "SymMatrix":
        """Build a :class:`SymMatrix` from ``a`` by exact symmetrization."""
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T))

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def norm_fro(self) -> float:
        return float(np.linalg.norm(self.entries, "fro"))


@dataclass(frozen=True)
class EigDecomposition:
    """Orthonormal eigendecomposition ``A = V diag(values) V^T``.

    Invariants: ``values`` ascending; ``vectors`` has orthonormal columns;
    the producing routine guarantees the reconstruction bound
    ``||V diag(values) V^T - A||_F <= 1e-10 ||A||_F``.
    """

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.values, dtype=float)
        v = np.asarray(self.vectors, dtype=float)
        if w.ndim != 1 or v.ndim != 2 or v.shape[1] != w.shape[0]:
            raise ValueError(
                f"inconsistent decomposition shapes {w.shape} / {v.shape}"
            )
        if np.any(np.diff(w) < 0):
            raise ValueError("eigenvalues must be in ascending order")
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "vectors", v)

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return ``V diag(values) V^T``."""
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class JacobiMatrix:
    """Symmetric tridiagonal matrix with strictly positive off-diagonal.

    ``diag`` holds the n main-diagonal entries, ``offdiag`` the n-1
    sub/super-diagonal entries.  Positivity of ``offdiag`` is the sign
    convention used by every three-term recursion in the package.
    """

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self) -> None:
        d = np.atleast_1d(np.asarray(self.diag, dtype=float))
        e = np.atleast_1d(np.asarray(self.offdiag, dtype=float))
        if e.shape[0] != max(d.shape[0] - 1, 0):
            raise ValueError(
                f"off-diagonal length {e.shape[0]} does not match order {d.shape[0]}"
            )
        if not (np.isfinite(d).all() and np.isfinite(e).all()):
            raise ValueError("tridiagonal entries must be finite")
        if d.shape[0] > 1 and np.any(e <= 0):
            raise ValueError("off-diagonal entries must be strictly positive")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def order(self) -> int:
        return self.diag.shape[0]

    def to_dense(self) -> np.ndarray:
        n = self.order
        a = np.diag(self.diag)
        if n > 1:
            a[np.arange(n - 1), np.arange(1, n)] = self.offdiag
            a[np.arange(1, n), np.arange(n - 1)] = self.offdiag
        return a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the tridiagonal matrix to a vector or to each column of a
        matrix without forming the dense array."""
        x = np.asarray(x, dtype=float)
        y = self.diag.reshape(-1, *([1] * (x.ndim - 1))) * x
        if self.order > 1:
            e = self.offdiag.reshape(-1, *([1] * (x.ndim - 1)))
            y[:-1] += e * x[1:]
            y[1:] += e * x[:-1]
        return y


def _check_reconstruction(a: np.ndarray, eig: EigDecomposition, role: str) -> None:
    scale = float(np.linalg.norm(a, "fro"))
    resid = float(np.linalg.norm(eig.reconstruct() - a, "fro"))
    if resid > RECONSTRUCTION_RTOL * max(scale, _ABS_FLOOR):
        raise ArithmeticError(
            f"eigendecomposition of the {role} failed its reconstruction bound: "
            f"residual {resid:.3e} exceeds {RECONSTRUCTION_RTOL:.1e} * {scale:.3e}"
        )


def sym_eig(a: SymMatrix, role: str = "matrix") -> EigDecomposition:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are returned in ascending order with orthonormal
    eigenvectors, and the reconstruction ``V diag(w) V^T`` is verified to
    reproduce ``a`` to within ``1e-10`` of its Frobenius norm.  ``role`` is
    used in error messages so failures identify which matrix of a larger
    computation broke.
    """
    if not isinstance(a, SymMatrix):
        a = SymMatrix.from_array(np.asarray(a))
    try:
        w, v = np.linalg.eigh(a.entries)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(
            f"eigendecomposition of the {role} did not converge: {exc}"
        ) from exc
    eig = EigDecomposition(values=w, vectors=v)
    _check_reconstruction(a.entries, eig, role)
    return eig


def tridiag_eig(
    diag: np.ndarray, offdiag: np.ndarray, role: str = "operator"
) -> EigDecomposition:
    """Eigendecomposition of a symmetric tridiagonal matrix.

    Same contract as :func:`sym_eig` but takes the two diagonals directly,
    which is how the large discretized operators are stored.
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    try:
        w, v = scipy.linalg.eigh_tridiagonal(diag, offdiag)
    except Exception as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(
            f"eigendecomposition of the {role} did not converge: {exc}"
        ) from exc
    eig = EigDecomposition(values=w, vectors=v)
    # Reconstruction check against the tridiagonal data, done bandwise to
    # avoid forming a dense m x m matrix for large operators.
    recon_diag = np.einsum("ij,j,ij->i", v, w, v)
    recon_off = np.einsum("ij,j,ij->i", v[:-1], w, v[1:]) if diag.size > 1 else np.zeros(0)
    scale = float(np.sqrt(np.sum(diag**2) + 2.0 * np.sum(offdiag**2)))
    resid = float(
        np.sqrt(np.sum((recon_diag - diag) ** 2) + 2.0 * np.sum((recon_off - offdiag) ** 2))
    )
    if resid > RECONSTRUCTION_RTOL * max(scale, _ABS_FLOOR):
        raise ArithmeticError(
            f"eigendecomposition of the {role} failed its reconstruction bound "
            f"on the tridiagonal band: residual {resid:.3e}, scale {scale:.3e}"
        )
    return eig


def cholesky(a: SymMatrix | np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor ``L`` with ``L @ L.T == a``.

    Raises ``ValueError`` naming the first non-positive pivot when ``a`` is
    not positive definite.  Written out longhand (rather than calling
    LAPACK) precisely so that the pivot index can be reported.
    """
    arr = a.entries if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    n = arr.shape[0]
    low = np.zeros_like(arr)
    for j in range(n):
        pivot = arr[j, j] - low[j, :j] @ low[j, :j]
        if not (pivot > 0.0) or not np.isfinite(pivot):
            raise ValueError(
                f"matrix is not positive definite (pivot {j} is {pivot:.6e})"
            )
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (arr[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def apply_matrix_function(
    eig: EigDecomposition, f: Callable[[np.ndarray], np.ndarray], x: np.ndarray
) -> np.ndarray:
    """Evaluate ``f(A) @ x`` given ``A``'s eigendecomposition.

    ``f`` is applied elementwise to the eigenvalue vector; ``x`` may be a
    vector or a matrix of column vectors.
    """
    fw = np.asarray(f(eig.values), dtype=float)
    if fw.shape != eig.values.shape:
        raise ValueError("f must map the eigenvalue vector elementwise")
    v = eig.vectors
    y = v.T @ np.asarray(x, dtype=float)
    if y.ndim == 1:
        return v @ (fw * y)
    return v @ (fw[:, None] * y)


def condition_number(a: SymMatrix) -> float:
    """Spectral condition number ``max|eig| / min|eig|``.

    Returns ``inf`` when the smallest eigenvalue magnitude is zero to
    machine precision.
    """
    w = sym_eig(a, role="condition-number input").values
    mags = np.abs(w)
    largest = float(mags.max())
    smallest = float(mags.min())
    if smallest <= _ABS_FLOOR or smallest <= np.finfo(float).tiny:
        return float("inf")
    return largest / smallest


def reduce_generalized(a: SymMatrix, b: SymMatrix) -> tuple[SymMatrix, np.ndarray]:
    """Reduce the symmetric pencil ``(a, b)`` with ``b`` positive definite.

    Returns ``(H, L)`` where ``b = L L^T`` and ``H = L^{-1} a L^{-T}``; the
    eigenvalues of ``H`` are the generalized eigenvalues of ``a x = theta
    b x``.  This congruence is the only route used for generalized problems
    in the package.
    """
    low = cholesky(b)
    tmp = scipy.linalg.solve_triangular(low, a.entries, lower=True)
    h = scipy.linalg.solve_triangular(low, tmp.T, lower=True)
    return SymMatrix.from_array(h), low
