"""Reduced-order model construction directly from boundary transfer data.

The key structural fact this module exploits: because the snapshots are
Chebyshev polynomials of the propagator applied to the source,
``u_k = T_k(P) b`` with ``P = cos(tau sqrt(A))``, every snapshot inner
product is a two-term combination of transfer samples,

    <<u_j, u_k>> = (f_{j+k} + f_{|j-k|}) / 2,
    <<u_j, P u_k>> = (f_{j+k+1} + f_{|j-k-1|} + f_{|j+k-1|} + f_{|j-k+1|}) / 4,

so the order-n snapshot Gram matrix ``U*U`` and the projected propagator
``U*PU`` are computable from the 2n recorded samples alone -- no knowledge
of the medium.  Whitening the pair by the Cholesky factor of ``U*U`` gives
a symmetric matrix whose eigenvalues are the nodes of an n-point quadrature
for the data's spectral function and whose first-component weights are the
quadrature weights; running a weighted Lanczos recursion on that discrete
measure produces the symmetric tridiagonal (Jacobi) form of the projected
propagator.  The resulting order-n model *interpolates* the data: its own
transfer series matches all 2n input samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .forward1d import DiscreteOperator, TransferSeries, propagate_snapshots

__all__ = [
    "GramPair",
    "SpectralMeasure",
    "JacobiROM",
    "assemble_gram",
    "spectral_measure",
    "lanczos_jacobi",
    "cholesky_rom",
    "rom_transfer",
    "projected_propagator",
]

#: Relative eigenvalue threshold below which the Gram matrix is declared
#: numerically rank-deficient.
PD_RTOL = 1e-13

#: Minimum quadrature-node separation.
NODE_GAP = 1e-12

ILL_CONDITIONED_HINT = (
    "the snapshot Gram matrix is numerically rank deficient: successive "
    "snapshots are nearly linearly dependent. Increase the time step tau "
    "(keeping it comparable to the pulse width sigma) or reduce the order n."
)


@dataclass(frozen=True)
class GramPair:
    """Snapshot Gram matrix, projected propagator, and the conditioning of
    the former -- everything the data determines about the order-n space."""

    uu: linalg.SymMatrix
    upu: linalg.SymMatrix
    cond_uu: float

    @property
    def n(self) -> int:
        return self.uu.order

    def dumps(self) -> str:
        """Debug dump as CSV text.

        Row layout: a header ``gram,<n>,<cond_uu>``, then the n rows of the
        snapshot Gram matrix, then the n rows of the projected propagator.
        """
        lines = [f"gram,{self.n},{self.cond_uu:.17g}"]
        for block in (self.uu.entries, self.upu.entries):
            lines.extend(",".join(f"{x:.17g}" for x in row) for row in block)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SpectralMeasure:
    """Discrete spectral measure: n nodes in (-1, 1) with positive weights.

    ``weights`` are the squared first components scaled by the total mass
    ``c = f_0``; they sum to ``c``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    c: float

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1D arrays of equal length")
        if np.any(np.abs(nodes) >= 1.0):
            raise ValueError(
                f"quadrature nodes must lie strictly inside (-1, 1); got "
                f"extremes [{nodes.min():.6g}, {nodes.max():.6g}]"
            )
        if np.any(np.diff(nodes) <= NODE_GAP):
            raise ValueError("quadrature nodes must be distinct and ascending")
        if np.any(weights <= 0.0):
            raise ValueError("quadrature weights must be strictly positive")
        total = float(weights.sum())
        if abs(total - self.c) > 1e-10 * max(abs(self.c), 1.0):
            raise ValueError(
                f"weights sum to {total:.12g}, expected the data mass {self.c:.12g}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class JacobiROM:
    """Order-n reduced model in Jacobi (symmetric tridiagonal) form.

    ``jacobi`` is the projected propagator expressed in the orthonormalized
    snapshot basis; ``c`` is the data mass ``f_0`` that scales its transfer
    series back to physical units.
    """

    jacobi: linalg.JacobiMatrix
    c: float

    @property
    def n(self) -> int:
        return self.jacobi.order

    def dumps(self) -> str:
        """Debug dump as CSV text.

        Row layout: a header ``jacobi,<n>,<c>``, then one row ``j,alpha,beta``
        per index (the coupling entry is empty on the last row).
        """
        lines = [f"jacobi,{self.n},{self.c:.17g}"]
        for j in range(self.n):
            beta = f"{self.jacobi.offdiag[j]:.17g}" if j < self.n - 1 else ""
            lines.append(f"{j + 1},{self.jacobi.diag[j]:.17g},{beta}")
        return "\n".join(lines) + "\n"


def assemble_gram(f: TransferSeries) -> GramPair:
    """Assemble ``U*U`` and ``U*PU`` from 2n transfer samples.

    Index identities use the even extension ``f_{-k} = f_k``; the largest
    index touched is ``j + k + 1 <= 2n - 1``, exactly the last recorded
    sample.  Raises ``ValueError`` with a tuning hint when the Gram matrix
    is not numerically positive definite (smallest eigenvalue at or below
    ``1e-13`` of the largest).
    """
    n = f.n
    vals = f.values
    jj, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    uu = 0.5 * (vals[jj + kk] + vals[np.abs(jj - kk)])
    upu = 0.25 * (
        vals[jj + kk + 1]
        + vals[np.abs(jj - kk - 1)]
        + vals[np.abs(jj + kk - 1)]
        + vals[np.abs(jj - kk + 1)]
    )
    uu_sym = linalg.SymMatrix.from_array(uu)
    upu_sym = linalg.SymMatrix.from_array(upu)
    eig = linalg.sym_eig(uu_sym, role="snapshot Gram matrix")
    largest = float(eig.values[-1])
    smallest = float(eig.values[0])
    if smallest <= PD_RTOL * max(largest, 0.0) or largest <= 0.0:
        raise ValueError(
            f"snapshot Gram matrix is not positive definite at order n={n} "
            f"(eigenvalue range [{smallest:.3e}, {largest:.3e}]); " + ILL_CONDITIONED_HINT
        )
    cond = largest / smallest
    return GramPair(uu=uu_sym, upu=upu_sym, cond_uu=cond)


def _whitened_propagator(g: GramPair) -> tuple[linalg.SymMatrix, np.ndarray]:
    """Congruence-reduce ``(U*PU, U*U)``: returns ``H = L^{-1} U*PU L^{-T}``
    and the Cholesky factor ``L`` of ``U*U``."""
    try:
        return linalg.reduce_generalized(g.upu, g.uu)
    except ValueError as exc:
        raise ValueError(f"{exc}; {ILL_CONDITIONED_HINT}") from exc


def spectral_measure(g: GramPair) -> SpectralMeasure:
    """Quadrature nodes and weights of the data's spectral function.

    Nodes are the eigenvalues of the whitened projected propagator; the
    weight attached to node ``theta_l`` is the squared first component of
    the corresponding eigenvector in the original (unwhitened) coordinates,
    normalized so the weights sum to ``c = f_0``.
    """
    h, low = _whitened_propagator(g)
    eig = linalg.sym_eig(h, role="whitened projected propagator")
    # first components: chi = Phi^T (U*U) e_1 = Phi_w^T L^T e_1, and L^T e_1
    # has only its first entry nonzero.
    y = low[0, 0] * eig.vectors[0, :]
    c = float(g.uu.entries[0, 0])
    return SpectralMeasure(nodes=eig.values, weights=y**2, c=c)


def lanczos_jacobi(meas: SpectralMeasure) -> JacobiROM:
    """Jacobi matrix of the discrete measure via the Lanczos recursion.

    Works with polynomials sampled at the nodes under the weighted inner
    product ``<p, q> = (1/c) sum_l w_l p(theta_l) q(theta_l)``; full
    reorthogonalization keeps the basis orthogonal to machine precision.
    The recursion coefficients are exactly the entries of the tridiagonal
    projected propagator.
    """
    n = meas.n
    theta = meas.nodes
    p = meas.weights / meas.c  # probability weights, sum to 1
    alphas = np.zeros(n)
    betas = np.zeros(max(n - 1, 0))
    basis = np.zeros((n, n))
    q_prev = np.zeros(n)
    q_cur = np.ones(n)  # already unit norm: sum(p) = 1
    basis[0] = q_cur
    for j in range(n):
        alpha = float(np.sum(p * theta * q_cur * q_cur))
        alphas[j] = alpha
        if j == n - 1:
            break
        r = (theta - alpha) * q_cur
        if j > 0:
            r -= betas[j - 1] * q_prev
        # full reorthogonalization, two passes
        for _ in range(2):
            coeffs = basis[: j + 1] @ (p * r)
            r -= coeffs @ basis[: j + 1]
        beta = float(np.sqrt(np.sum(p * r * r)))
        if not beta > NODE_GAP:
            raise ArithmeticError(
                f"Lanczos recursion broke down at step {j + 1}: effective "
                f"order of the measure is {j + 1} (need {n} distinct nodes "
                "with nonzero weights)"
            )
        betas[j] = beta
        q_prev, q_cur = q_cur, r / beta
        basis[j + 1] = q_cur
    jac = linalg.JacobiMatrix(diag=alphas, offdiag=betas)
    return JacobiROM(jacobi=jac, c=meas.c)


def cholesky_rom(g: GramPair) -> JacobiROM:
    """Jacobi matrix via direct Cholesky congruence of the Gram pair.

    The whitened projected propagator is already tridiagonal in exact
    arithmetic; this route verifies that, zeroes the far band, and applies
    the positive off-diagonal sign convention.  It must agree with
    :func:`lanczos_jacobi` to rounding.
    """
    h, _ = _whitened_propagator(g)
    dense = h.entries
    n = g.n
    scale = max(float(np.abs(dense).max()), 1.0)
    band_resid = 0.0
    if n > 2:
        mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) >= 2
        band_resid = float(np.abs(dense[mask]).max())
    if band_resid > 1e-8 * scale:
        raise ArithmeticError(
            f"whitened projected propagator is not numerically tridiagonal "
            f"(stray entry {band_resid:.3e}); the Gram pair is inconsistent"
        )
    diag = np.diag(dense).copy()
    off = np.abs(np.diag(dense, 1)).copy() if n > 1 else np.zeros(0)
    if n > 1 and np.any(off <= 0.0):
        raise ArithmeticError(
            "whitened projected propagator has a vanishing coupling entry; "
            "effective order is lower than n"
        )
    jac = linalg.JacobiMatrix(diag=diag, offdiag=off)
    return JacobiROM(jacobi=jac, c=float(g.uu.entries[0, 0]))


def projected_propagator(
    op: DiscreteOperator, b: np.ndarray, tau: float, n: int
) -> np.ndarray:
    """Order-n projection of the propagator, computed with full knowledge
    of the operator (the route available only when the medium is known).

    Orthonormalizes the first n snapshots under the primary weight and
    returns ``V^T W cos(tau sqrt(A)) V`` as a dense n x n array.  In exact
    arithmetic this equals the Jacobi matrix the data routes produce; the
    off-diagonal signs come out positive because Gram-Schmidt preserves the
    snapshots' leading coefficients.
    """
    snaps = propagate_snapshots(op, b, tau, n)
    v = snaps.primary.copy()
    w = op.weight_primary
    for j in range(n):
        for _ in range(2):  # modified Gram-Schmidt, second pass for accuracy
            for i in range(j):
                v[:, j] -= np.dot(v[:, i] * w, v[:, j]) * v[:, i]
        nrm = np.sqrt(np.dot(v[:, j] * w, v[:, j]))
        if not nrm > 0:
            raise ArithmeticError(
                f"snapshot space is rank deficient at column {j + 1}"
            )
        v[:, j] /= nrm
    pv = op.apply_function(lambda lam: np.cos(tau * np.sqrt(np.maximum(lam, 0.0))), v)
    return (v * w[:, None]).T @ pv


def rom_transfer(rom: JacobiROM, count: int) -> np.ndarray:
    """Transfer series of the reduced model: ``c * e_1^T T_k(P_n) e_1``.

    Evaluated by the Chebyshev three-term recursion on tridiagonal
    matrix-vector products.  For ``count <= 2n`` this reproduces the data
    the model was built from (the interpolation property); larger counts
    extrapolate.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    n = rom.n
    e1 = np.zeros(n)
    e1[0] = 1.0
    out = np.empty(count)
    t_prev = e1
    out[0] = rom.c * t_prev[0]
    if count == 1:
        return out
    t_cur = rom.jacobi.matvec(e1)
    out[1] = rom.c * t_cur[0]
    for k in range(2, count):
        t_next = 2.0 * rom.jacobi.matvec(t_cur) - t_prev
        t_prev, t_cur = t_cur, t_next
        out[k] = rom.c * t_cur[0]
    return out
