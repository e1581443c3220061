"""Two-dimensional multi-input/multi-output extension of the pipeline.

An array of ``m`` collocated sources/receivers sits on the left edge
``x = 0`` of the rectangle ``[0, xmax] x [-ymax, ymax]``; that edge is
reflecting (Neumann), the other three edges are soft (Dirichlet).  The
recorded object per time sample is now an ``m x m`` matrix

    F_k[i, j] = <<b^i, cos(k tau sqrt(A)) b^j>>,

and every scalar ingredient of the 1D pipeline has a block analog worked
out here: block Gram assembly, a matrix-weighted spectral measure, block
Lanczos, and a block phase-space recursion whose per-step Gram matrices
``Ghat_j`` / ``G_j`` generalize the continued-fraction coefficients.  The
velocity image is read off the *diagonals* of those matrices, receiver line
by receiver line, and mapped to depth with the 1D machinery per line.

The propagator is never time-stepped and the 2D operator is never densely
diagonalized: data blocks are assembled from a Chebyshev expansion of
``cos(t sqrt(lambda))`` over the operator's spectral interval, with
Bessel-function coefficients, applied through sparse matrix products.  The
expansion is spectrally accurate, so the blocks match a dense
eigendecomposition to rounding (verified on small grids in the tests).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.special

from . import linalg
from .forward1d import TransferSeries, VelocityModel, build_grid, discretize_operator, source_vector
from .gammas import orthogonalize_reference
from .invert1d import reference_grid, to_physical

__all__ = [
    "VelocityField2D",
    "BlockTransferSeries",
    "BlockGramPair",
    "BlockMeasure",
    "BlockROM",
    "BlockGammaSet",
    "Invert2DResult",
    "forward2d",
    "block_gram",
    "block_measure",
    "block_lanczos",
    "block_gammas",
    "invert2d",
    "write_block_series",
    "read_block_series",
]

#: Hard cap on solver cells unless the caller raises it explicitly.
DEFAULT_CELL_CAP = 2_000_000

#: Relative eigenvalue floor for matrix square roots / inverses of the
#: block quantities.
BLOCK_RANK_RTOL = 1e-12


# ---------------------------------------------------------------------------
# 2D velocity fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityField2D:
    """Wave-speed field sampled on a uniform grid over the rectangle.

    ``values[i, j]`` is the speed at ``x_i = i * xmax/(nsx-1)``,
    ``y_j = -ymax + j * 2*ymax/(nsy-1)``.  Bilinear interpolation in
    between.  The speed along the array edge ``x = 0`` must be constant
    (checked where it matters, in :func:`forward2d`).
    """

    xmax: float
    ymax: float
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 2 or vals.shape[1] < 2:
            raise ValueError("values must be a 2D array with at least 2 samples per axis")
        if not np.isfinite(vals).all() or np.any(vals <= 0):
            raise ValueError("velocity values must be finite and strictly positive")
        if not (self.xmax > 0 and self.ymax > 0):
            raise ValueError("xmax and ymax must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def v00(self) -> float:
        """Speed at the array center (0, 0)."""
        return float(self.at(0.0, 0.0))

    def at(self, x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray | float:
        """Bilinear interpolation (x and y broadcast together)."""
        nsx, nsy = self.values.shape
        xs = np.clip(np.asarray(x, dtype=float) / self.xmax * (nsx - 1), 0, nsx - 1)
        ys = np.clip((np.asarray(y, dtype=float) + self.ymax) / (2 * self.ymax) * (nsy - 1), 0, nsy - 1)
        i0 = np.clip(np.floor(xs).astype(int), 0, nsx - 2)
        j0 = np.clip(np.floor(ys).astype(int), 0, nsy - 2)
        fx = xs - i0
        fy = ys - j0
        v = (
            self.values[i0, j0] * (1 - fx) * (1 - fy)
            + self.values[i0 + 1, j0] * fx * (1 - fy)
            + self.values[i0, j0 + 1] * (1 - fx) * fy
            + self.values[i0 + 1, j0 + 1] * fx * fy
        )
        return v if np.ndim(x) or np.ndim(y) else float(v)

    @classmethod
    def constant(cls, v: float, xmax: float, ymax: float) -> "VelocityField2D":
        return cls(xmax=xmax, ymax=ymax, values=np.full((2, 2), float(v)))

    def to_file(self, path: str) -> None:
        nsx, nsy = self.values.shape
        with open(path, "w") as fh:
            fh.write(f"{nsx},{nsy},{float(self.xmax)!r},{float(self.ymax)!r}\n")
            for i in range(nsx):
                fh.write(",".join(repr(float(v)) for v in self.values[i]) + "\n")

    @classmethod
    def from_file(cls, path: str) -> "VelocityField2D":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        head = lines[0].split(",")
        if len(head) != 4:
            raise ValueError(f"malformed 2D field header {lines[0]!r}; expected nx,ny,xmax,ymax")
        nsx, nsy = int(head[0]), int(head[1])
        xmax, ymax = float(head[2]), float(head[3])
        flat = np.array([float(tok) for ln in lines[1:] for tok in ln.split(",") if tok])
        if flat.size != nsx * nsy:
            raise ValueError(f"2D field promises {nsx * nsy} values but {flat.size} follow")
        return cls(xmax=xmax, ymax=ymax, values=flat.reshape(nsx, nsy))


# ---------------------------------------------------------------------------
# solver geometry and operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Solver2D:
    """Assembled symmetric form of the 2D operator plus bookkeeping."""

    nx: int
    ny: int
    hx: float
    hy: float
    xnodes: np.ndarray
    ynodes: np.ndarray
    vnodes: np.ndarray  # (nx, ny)
    a_sym: sp.csr_matrix  # symmetrized operator
    sqrt_w: np.ndarray  # flattened sqrt of the quadrature weight hxhat*hy/v^2
    lam_max: float  # Gershgorin upper bound on the spectrum


def _assemble_solver(field: VelocityField2D, nx: int, ny: int, cell_cap: int) -> _Solver2D:
    if nx < 4 or ny < 3:
        raise ValueError(f"solver grid too coarse: nx={nx}, ny={ny}")
    if nx * ny > cell_cap:
        raise ValueError(
            f"solver grid nx*ny = {nx * ny} exceeds the memory cap {cell_cap}; "
            "raise cell_cap explicitly if this size is intended"
        )
    hx = field.xmax / nx
    hy = 2.0 * field.ymax / (ny + 1)
    xnodes = np.arange(nx) * hx
    ynodes = -field.ymax + (np.arange(ny) + 1) * hy
    vnodes = np.asarray(field.at(xnodes[:, None], ynodes[None, :]), dtype=float)

    # x-part: staggered second difference, reflecting at x=0 (half first
    # cell), soft wall at xmax; symmetric once premultiplied by the dual
    # step weights hxhat = [hx/2, hx, ..., hx].
    hxhat = np.full(nx, hx)
    hxhat[0] = 0.5 * hx
    kappa = np.full(nx, 1.0 / hx)
    diag_x = kappa + np.concatenate(([0.0], kappa[:-1]))
    sx = sp.diags(
        [-kappa[:-1], diag_x, -kappa[:-1]], offsets=[-1, 0, 1], format="csr"
    )
    # y-part: plain second difference with soft walls at +-ymax, scaled so
    # that hxhat (x) sy is the weighted symmetric form.
    sy = sp.diags(
        [np.full(ny - 1, -1.0 / hy), np.full(ny, 2.0 / hy), np.full(ny - 1, -1.0 / hy)],
        offsets=[-1, 0, 1],
        format="csr",
    )
    weighted = sp.kron(sx, hy * sp.eye(ny), format="csr") + sp.kron(
        sp.diags(hxhat), sy, format="csr"
    )
    w_flat = (hxhat[:, None] * hy / vnodes**2).ravel()
    inv_sqrt = 1.0 / np.sqrt(w_flat)
    a_sym = sp.diags(inv_sqrt) @ weighted @ sp.diags(inv_sqrt)
    a_sym = a_sym.tocsr()
    lam_max = float(np.abs(a_sym).sum(axis=1).max())
    return _Solver2D(
        nx=nx,
        ny=ny,
        hx=hx,
        hy=hy,
        xnodes=xnodes,
        ynodes=ynodes,
        vnodes=vnodes,
        a_sym=a_sym,
        sqrt_w=np.sqrt(w_flat),
        lam_max=lam_max,
    )


# ---------------------------------------------------------------------------
# Chebyshev evaluation of operator functions
# ---------------------------------------------------------------------------


def _cheb_apply(a_sym: sp.csr_matrix, lam_max: float, coeffs: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_i coeffs[i] T_i(X) block`` with ``X = (2/M) A - I``."""
    t_prev = block
    out = coeffs[0] * t_prev
    if coeffs.size == 1:
        return out
    t_cur = (2.0 / lam_max) * (a_sym @ block) - block
    out += coeffs[1] * t_cur
    for c in coeffs[2:]:
        t_next = (4.0 / lam_max) * (a_sym @ t_cur) - 2.0 * t_cur - t_prev
        t_prev, t_cur = t_cur, t_next
        out += c * t_cur
    return out


def _exp_cheb_coeffs(a: float, tol: float = 1e-17) -> np.ndarray:
    """Chebyshev coefficients of ``exp(-a(1+x))`` on ``[-1, 1]``.

    ``c_0 = e^{-a} I_0(a)``, ``c_k = 2 e^{-a} (-1)^k I_k(a)``; the scaled
    Bessel routine keeps everything finite for large ``a``.
    """
    terms = [float(scipy.special.ive(0, a))]
    k = 1
    while True:
        c = 2.0 * float(scipy.special.ive(k, a)) * (-1 if k % 2 else 1)
        terms.append(c)
        if abs(c) < tol and k > max(4, int(a)):
            break
        k += 1
        if k > 100_000:  # pragma: no cover - safety valve
            raise ArithmeticError("source-smoothing expansion failed to converge")
    return np.array(terms)


def _cos_cheb_degree(zmax: float) -> int:
    return int(np.ceil(0.5 * (zmax + 9.0 * zmax ** (1.0 / 3.0) + 40.0)))


def _cos_cheb_coeffs(z: float, degree: int) -> np.ndarray:
    """Chebyshev coefficients of ``cos(z sqrt((1+x)/2))`` on ``[-1, 1]``:
    ``c_i = (2 - delta_i0) (-1)^i J_{2i}(z)``."""
    i = np.arange(degree + 1)
    c = scipy.special.jv(2 * i, z)
    c[1:] *= 2.0 * (-1.0) ** i[1:]
    return c


# ---------------------------------------------------------------------------
# block transfer data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockTransferSeries:
    """Matrix-valued transfer data: ``blocks[k]`` is the symmetric m x m
    sample at time ``k tau``.  ``sources_y`` records the receiver line
    positions the entries refer to."""

    tau: float
    sigma: float
    blocks: np.ndarray
    sources_y: np.ndarray

    def __post_init__(self) -> None:
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
            raise ValueError(f"blocks must be (count, m, m), got {blocks.shape}")
        if blocks.shape[0] < 2 or blocks.shape[0] % 2:
            raise ValueError("block series must hold an even number >= 2 of samples")
        asym = np.abs(blocks - blocks.transpose(0, 2, 1)).max()
        scale = max(np.abs(blocks).max(), 1e-300)
        if asym > 1e-10 * scale:
            raise ValueError(f"transfer blocks must be symmetric (asymmetry {asym:.3e})")
        blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
        w0 = np.linalg.eigvalsh(blocks[0])
        if w0[0] < -1e-10 * max(w0[-1], 1e-300):
            raise ValueError(
                f"zeroth block must be positive semidefinite (smallest eigenvalue {w0[0]:.3e})"
            )
        srcs = np.asarray(self.sources_y, dtype=float)
        if srcs.shape != (blocks.shape[1],):
            raise ValueError("sources_y must list one position per array channel")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "sources_y", srcs)

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.blocks.shape[0] // 2

    def scalar(self) -> TransferSeries:
        """View an m=1 block series as a plain scalar series."""
        if self.m != 1:
            raise ValueError(f"scalar() requires m=1, this series has m={self.m}")
        return TransferSeries(tau=self.tau, sigma=self.sigma, values=self.blocks[:, 0, 0])

    @classmethod
    def from_scalar(cls, f: TransferSeries, source_y: float = 0.0) -> "BlockTransferSeries":
        return cls(
            tau=f.tau,
            sigma=f.sigma,
            blocks=f.values.reshape(-1, 1, 1),
            sources_y=np.array([source_y]),
        )


def forward2d(
    field: VelocityField2D,
    sources_y: np.ndarray,
    sigma: float,
    tau: float,
    n: int,
    nx: int = 200,
    ny: int = 120,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> BlockTransferSeries:
    """Synthesize the matrix transfer series for a 2D medium.

    Sources are Gaussian-smoothed impulses on the ``x = 0`` edge at the
    requested ``sources_y`` positions (snapped to the nearest transverse
    node); the speed must be constant along that edge.  Each block
    ``F_k = B^T W cos(k tau sqrt(A)) B`` is evaluated through the Chebyshev
    expansion of the cosine over the operator's spectral interval -- exact
    to rounding for the discrete operator, with no step-size restriction.
    """
    if not sigma > 0 or not tau > 0:
        raise ValueError(f"sigma and tau must be positive, got sigma={sigma}, tau={tau}")
    if n < 1:
        raise ValueError(f"block order n must be at least 1, got {n}")
    sources_y = np.atleast_1d(np.asarray(sources_y, dtype=float))
    if sources_y.ndim != 1 or sources_y.size < 1:
        raise ValueError("sources_y must be a nonempty 1D array")
    if np.any(np.abs(sources_y) >= field.ymax):
        raise ValueError("source positions must lie strictly inside (-ymax, ymax)")

    solver = _assemble_solver(field, nx, ny, cell_cap)
    edge = solver.vnodes[0, :]
    if edge.max() - edge.min() > 1e-10 * edge.max():
        raise ValueError(
            "speed must be constant along the array edge x=0; got range "
            f"[{edge.min():.6g}, {edge.max():.6g}]"
        )

    src_idx = np.array([int(np.argmin(np.abs(solver.ynodes - y))) for y in sources_y])
    if np.unique(src_idx).size != src_idx.size:
        raise ValueError("two sources snapped to the same transverse node; move them apart")

    m = sources_y.size
    npts = solver.nx * solver.ny
    deltas = np.zeros((npts, m))
    hx_first = 0.5 * solver.hx
    for col, j in enumerate(src_idx):
        deltas[0 * solver.ny + j, col] = 1.0 / (hx_first * solver.hy)
    deltas_sym = solver.sqrt_w[:, None] * deltas

    v00 = float(edge[src_idx].mean())
    a_smooth = sigma**2 * solver.lam_max / 8.0
    b_sym = v00 * _cheb_apply(
        solver.a_sym, solver.lam_max, _exp_cheb_coeffs(a_smooth), deltas_sym
    )

    count = 2 * n
    zmax = (count - 1) * tau * np.sqrt(solver.lam_max)
    degree = _cos_cheb_degree(zmax)
    coeffs = np.stack(
        [_cos_cheb_coeffs(k * tau * np.sqrt(solver.lam_max), degree) for k in range(count)]
    )  # (count, degree+1)

    # accumulate F_k = sum_i coeffs[k, i] * (B^T T_i(X) B) in one sweep
    blocks = np.zeros((count, m, m))
    t_prev = b_sym
    moment = b_sym.T @ t_prev
    blocks += coeffs[:, 0][:, None, None] * moment
    t_cur = (2.0 / solver.lam_max) * (solver.a_sym @ b_sym) - b_sym
    moment = b_sym.T @ t_cur
    blocks += coeffs[:, 1][:, None, None] * moment
    for i in range(2, degree + 1):
        t_next = (4.0 / solver.lam_max) * (solver.a_sym @ t_cur) - 2.0 * t_cur - t_prev
        t_prev, t_cur = t_cur, t_next
        moment = b_sym.T @ t_cur
        blocks += coeffs[:, i][:, None, None] * moment
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return BlockTransferSeries(
        tau=float(tau),
        sigma=float(sigma),
        blocks=blocks,
        sources_y=solver.ynodes[src_idx],
    )


# ---------------------------------------------------------------------------
# block pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockGramPair:
    """Gram matrices of the block snapshot family, order ``m * n``."""

    uu: linalg.SymMatrix
    upu: linalg.SymMatrix
    cond_uu: float
    m: int

    @property
    def n(self) -> int:
        return self.uu.order // self.m


def block_gram(fs: BlockTransferSeries) -> BlockGramPair:
    """Block analog of the Gram assembly: the (j, k) block of ``U*U`` is
    ``(F_{j+k} + F_{|j-k|}) / 2`` and of ``U*PU`` the four-term average."""
    from .romdata import ILL_CONDITIONED_HINT, PD_RTOL

    n, m = fs.n, fs.m
    blocks = fs.blocks
    uu = np.zeros((n * m, n * m))
    upu = np.zeros((n * m, n * m))
    for j in range(n):
        for k in range(n):
            uu[j * m : (j + 1) * m, k * m : (k + 1) * m] = 0.5 * (
                blocks[j + k] + blocks[abs(j - k)]
            )
            upu[j * m : (j + 1) * m, k * m : (k + 1) * m] = 0.25 * (
                blocks[j + k + 1]
                + blocks[abs(j - k - 1)]
                + blocks[abs(j + k - 1)]
                + blocks[abs(j - k + 1)]
            )
    uu_sym = linalg.SymMatrix.from_array(uu)
    upu_sym = linalg.SymMatrix.from_array(upu)
    eig = linalg.sym_eig(uu_sym, role="block snapshot Gram matrix")
    largest, smallest = float(eig.values[-1]), float(eig.values[0])
    if smallest <= PD_RTOL * max(largest, 0.0) or largest <= 0.0:
        raise ValueError(
            f"block snapshot Gram matrix is not positive definite at order "
            f"n={n}, m={m} (eigenvalue range [{smallest:.3e}, {largest:.3e}]); "
            + ILL_CONDITIONED_HINT
        )
    return BlockGramPair(uu=uu_sym, upu=upu_sym, cond_uu=largest / smallest, m=m)


@dataclass(frozen=True)
class BlockMeasure:
    """Matrix-weighted spectral measure: ``mn`` nodes (degeneracy allowed)
    with m-vector weight rows ``chi`` satisfying ``chi^T chi = F_0``."""

    nodes: np.ndarray  # (mn,)
    chi: np.ndarray  # (mn, m)
    c_matrix: np.ndarray  # (m, m) -- F_0
    m: int

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        chi = np.asarray(self.chi, dtype=float)
        if np.any(np.abs(nodes) >= 1.0):
            raise ValueError(
                f"block measure nodes must lie strictly inside (-1, 1); got "
                f"extremes [{nodes.min():.6g}, {nodes.max():.6g}]"
            )
        mass = chi.T @ chi
        resid = np.abs(mass - self.c_matrix).max()
        if resid > 1e-9 * max(np.abs(self.c_matrix).max(), 1e-300):
            raise ValueError(f"block measure mass mismatch ({resid:.3e})")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "chi", chi)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def n(self) -> int:
        return self.size // self.m


def block_measure(gram: BlockGramPair) -> BlockMeasure:
    """Whiten the block Gram pair and extract nodes plus weight rows.

    Same congruence as the scalar case; the weight rows are
    ``chi = Phi^T L^T E_1`` where ``E_1`` selects the first block column,
    so ``chi^T chi`` telescopes exactly to ``F_0``.
    """
    h, low = linalg.reduce_generalized(gram.upu, gram.uu)
    eig = linalg.sym_eig(h, role="whitened block propagator")
    m = gram.m
    chi = eig.vectors.T @ low.T[:, :m]
    c_matrix = gram.uu.entries[:m, :m]
    return BlockMeasure(nodes=eig.values, chi=chi, c_matrix=c_matrix, m=m)


@dataclass(frozen=True)
class BlockROM:
    """Block tridiagonal reduced model: diagonal blocks ``alphas``,
    symmetric positive definite couplings ``betas``, and the square root of
    the data mass ``F_0`` used to scale transfer blocks."""

    alphas: np.ndarray  # (n, m, m)
    betas: np.ndarray  # (n-1, m, m)
    c_matrix: np.ndarray  # (m, m)

    @property
    def n(self) -> int:
        return self.alphas.shape[0]

    @property
    def m(self) -> int:
        return self.alphas.shape[1]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the block tridiagonal matrix to an (n*m, p) array."""
        n, m = self.n, self.m
        xb = x.reshape(n, m, -1)
        yb = np.einsum("jab,jbp->jap", self.alphas, xb)
        if n > 1:
            yb[1:] += np.einsum("jab,jbp->jap", self.betas, xb[:-1])
            yb[:-1] += np.einsum("jba,jbp->jap", self.betas, xb[1:])
        return yb.reshape(x.shape)

    def transfer(self, count: int) -> np.ndarray:
        """Blocks ``C^{1/2} E_1^T T_k(P) E_1 C^{1/2}`` for k < count."""
        n, m = self.n, self.m
        c_half = _sym_sqrt(self.c_matrix, "block data mass")[0]
        e1 = np.zeros((n * m, m))
        e1[:m, :] = np.eye(m)
        out = np.zeros((count, m, m))
        t_prev = e1
        out[0] = c_half @ t_prev[:m, :] @ c_half
        if count == 1:
            return out
        t_cur = self.matvec(e1)
        out[1] = c_half @ t_cur[:m, :] @ c_half
        for k in range(2, count):
            t_next = 2.0 * self.matvec(t_cur) - t_prev
            t_prev, t_cur = t_cur, t_next
            out[k] = c_half @ t_cur[:m, :] @ c_half
        return 0.5 * (out + out.transpose(0, 2, 1))


def _sym_sqrt(a: np.ndarray, role: str) -> tuple[np.ndarray, np.ndarray]:
    """Principal square root and inverse square root of an SPD matrix,
    with a rank check at the relative floor."""
    eig = linalg.sym_eig(linalg.SymMatrix.from_array(a), role=role)
    w = eig.values
    if w[0] <= BLOCK_RANK_RTOL * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise ArithmeticError(
            f"{role} is numerically rank deficient (eigenvalues "
            f"[{w[0]:.3e}, {w[-1]:.3e}]); the array channels are redundant"
        )
    root = np.sqrt(w)
    v = eig.vectors
    return (v * root) @ v.T, (v / root) @ v.T


def block_lanczos(meas: BlockMeasure) -> BlockROM:
    """Block Lanczos on the matrix-weighted discrete measure.

    Starts from the mass-whitened weight rows and tridiagonalizes the node
    multiplication operator; couplings are taken as principal symmetric
    square roots of the residual Grams, so they are SPD, and breakdown
    (rank-deficient coupling) raises with the block index.  Full
    reorthogonalization keeps the block basis orthonormal.
    """
    mn, m = meas.size, meas.m
    n = meas.n
    _, c_inv_half = _sym_sqrt(meas.c_matrix, "block data mass")
    q = meas.chi @ c_inv_half  # (mn, m)
    theta = meas.nodes
    qs = [q]
    alphas = np.zeros((n, m, m))
    betas = np.zeros((max(n - 1, 0), m, m))
    for j in range(n):
        tq = theta[:, None] * qs[j]
        alpha = qs[j].T @ tq
        alphas[j] = 0.5 * (alpha + alpha.T)
        if j == n - 1:
            break
        r = tq - qs[j] @ alphas[j]
        if j > 0:
            r -= qs[j - 1] @ betas[j - 1].T
        for _ in range(2):  # full reorthogonalization
            for qi in qs:
                r -= qi @ (qi.T @ r)
        gram_r = r.T @ r
        try:
            beta, _ = _sym_sqrt(gram_r, f"block Lanczos residual at step {j + 1}")
        except ArithmeticError as exc:
            raise ArithmeticError(
                f"block Lanczos broke down at step {j + 1}: {exc}"
            ) from exc
        betas[j] = beta
        w_inv = np.linalg.inv(beta)
        qs.append(r @ w_inv)
    return BlockROM(alphas=alphas, betas=betas, c_matrix=meas.c_matrix)


@dataclass(frozen=True)
class BlockGammaSet:
    """Per-step Gram matrices of the block phase-space recursion.

    ``ghat_mats[j]`` is SPD and generalizes ``1/ghat_j`` -- its *diagonal*
    entries play the role of per-receiver-line reciprocal primary
    coefficients; ``g_mats[j]`` generalizes ``g_j`` directly (it IS the
    inverse costate Gram).  ``ghat_diag[j, i]`` stores the data actually
    used for imaging: the primary Gram diagonal (inverse-coefficient
    analog) and the dual inverse-Gram diagonal (coefficient analog).
    """

    ghat_mats: np.ndarray  # (n, m, m): Ghat_j, SPD
    g_mats: np.ndarray  # (n, m, m): G_j, SPD
    ghat_diag: np.ndarray  # (n, m): diag of Ghat_j^{-1} (state Gram)
    g_diag: np.ndarray  # (n, m): diag of G_j
    source: str

    @property
    def n(self) -> int:
        return self.ghat_mats.shape[0]

    @property
    def m(self) -> int:
        return self.ghat_mats.shape[1]


def block_gammas(meas: BlockMeasure, tau: float, source: str = "data") -> BlockGammaSet:
    """Block phase-space recursion for the coefficient matrices.

    State and costate are ``2mn x m``; each node contributes a duplicated
    pair of rows with diagonal map entries ``+sqrt(lam_l), -sqrt(lam_l)``,
    ``lam_l = (2/tau^2)(1 - theta_l)``.  Gram inverses right-multiply the
    updates.  Reduces exactly to the scalar recursion at m=1.
    """
    if not tau > 0:
        raise ValueError(f"time step tau must be positive, got {tau}")
    mn, m = meas.size, meas.m
    n = meas.n
    lam = (2.0 / tau**2) * (1.0 - meas.nodes)
    root = np.sqrt(np.maximum(lam, 0.0))
    ldiag = np.empty(2 * mn)
    ldiag[0::2] = root
    ldiag[1::2] = -root
    mu = np.sqrt(0.5) * np.repeat(meas.chi, 2, axis=0)  # (2mn, m)
    omega = np.zeros_like(mu)
    ghat_mats = np.zeros((n, m, m))
    g_mats = np.zeros((n, m, m))
    ghat_diag = np.zeros((n, m))
    g_diag = np.zeros((n, m))
    for j in range(n):
        gram = mu.T @ mu
        ghat_diag[j] = np.diag(gram)
        try:
            ghat_j = _spd_inverse(gram, f"block state Gram at step {j + 1}")
        except ArithmeticError as exc:
            raise ArithmeticError(
                f"block phase-space recursion broke down at step {j + 1}: {exc}"
            ) from exc
        ghat_mats[j] = ghat_j
        omega = omega + (ldiag[:, None] * mu) @ ghat_j
        gram_w = omega.T @ omega
        try:
            g_j = _spd_inverse(gram_w, f"block costate Gram at step {j + 1}")
        except ArithmeticError as exc:
            raise ArithmeticError(
                f"block phase-space recursion broke down at step {j + 1}: {exc}"
            ) from exc
        g_mats[j] = g_j
        g_diag[j] = np.diag(g_j)
        mu = mu - (ldiag[:, None] * omega) @ g_j
    return BlockGammaSet(
        ghat_mats=ghat_mats,
        g_mats=g_mats,
        ghat_diag=ghat_diag,
        g_diag=g_diag,
        source=source,
    )


def _spd_inverse(a: np.ndarray, role: str) -> np.ndarray:
    eig = linalg.sym_eig(linalg.SymMatrix.from_array(a), role=role)
    w = eig.values
    if w[0] <= BLOCK_RANK_RTOL * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise ArithmeticError(
            f"{role} is numerically rank deficient (eigenvalues "
            f"[{w[0]:.3e}, {w[-1]:.3e}])"
        )
    v = eig.vectors
    inv = (v / w) @ v.T
    return 0.5 * (inv + inv.T)


# ---------------------------------------------------------------------------
# 2D inversion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Invert2DResult:
    """Velocity image on the ray-coordinate node lattice.

    Rows are indexed by receiver line i and node j: ``est_primary[i, j]``
    at ``(zeta_primary[j], nu[i])`` in ray coordinates, physical position
    ``(x_primary[i, j], nu[i])``; likewise for the dual lattice.
    """

    zeta_primary: np.ndarray
    zeta_dual: np.ndarray
    nu: np.ndarray
    est_primary: np.ndarray
    est_dual: np.ndarray
    x_primary: np.ndarray
    x_dual: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.zeta_primary.size

    @property
    def m(self) -> int:
        return self.nu.size

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("zeta,nu,x,y,v_estimate,node_type\n")
            for i in range(self.m):
                for j in range(self.n):
                    fh.write(
                        f"{float(self.zeta_primary[j])!r},{float(self.nu[i])!r},"
                        f"{float(self.x_primary[i, j])!r},{float(self.nu[i])!r},"
                        f"{float(self.est_primary[i, j])!r},primary\n"
                    )
                    fh.write(
                        f"{float(self.zeta_dual[j])!r},{float(self.nu[i])!r},"
                        f"{float(self.x_dual[i, j])!r},{float(self.nu[i])!r},"
                        f"{float(self.est_dual[i, j])!r},dual\n"
                    )


def invert2d(
    fs: BlockTransferSeries,
    v0: float,
    xmax: float,
    ymax: float,
    nx: int = 200,
    ny: int = 120,
    m_ref: int = 2000,
    n: int | None = None,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> Invert2DResult:
    """Direct 2D velocity imaging from one block transfer series.

    The data-side block recursion is ratioed against a *reference* run: the
    same array, same rectangle, same solver resolution, over the constant
    background ``v0``.  Matching geometry makes finite-aperture and wall
    effects cancel in the per-line ratios.  Node depths come from the 1D
    reference construction on ``[0, xmax/v0]`` (straight rays in the
    constant background); transverse node lines sit at the receiver
    positions.
    """
    if not v0 > 0:
        raise ValueError(f"reference speed must be positive, got {v0}")
    if n is None:
        n = fs.n
    if n < 1 or n > fs.n:
        raise ValueError(f"order n must be in [1, {fs.n}], got {n}")
    if n < fs.n:
        fs = BlockTransferSeries(
            tau=fs.tau, sigma=fs.sigma, blocks=fs.blocks[: 2 * n], sources_y=fs.sources_y
        )

    # data side
    gram = block_gram(fs)
    meas = block_measure(gram)
    data_g = block_gammas(meas, fs.tau, source="data")

    # reference side: same array over the constant background
    ref_field = VelocityField2D.constant(v0, xmax=xmax, ymax=ymax)
    ref_fs = forward2d(
        ref_field, fs.sources_y, fs.sigma, fs.tau, n, nx=nx, ny=ny, cell_cap=cell_cap
    )
    ref_gram = block_gram(ref_fs)
    ref_meas = block_measure(ref_gram)
    ref_g = block_gammas(ref_meas, fs.tau, source="reference")

    # node depths from the 1D reference construction on [0, xmax/v0]
    ref_model = VelocityModel.constant(v0, xmax=xmax, role="reference")
    grid1d = build_grid(m_ref, ref_model.traveltime_length())
    op0 = discretize_operator(grid1d, ref_model)
    b0 = source_vector(op0, fs.sigma)
    ortho0 = orthogonalize_reference(op0, b0, fs.tau, n)
    nodes = reference_grid(ortho0, ref_model)

    # per-line ratio estimates: primary from state-Gram diagonals
    # (diag Ghat_j^{-1}), dual from inverse costate-Gram diagonals (diag G_j)
    est_primary = (v0 * data_g.ghat_diag / ref_g.ghat_diag).T  # (m, n)
    est_dual = (v0 * data_g.g_diag / ref_g.g_diag).T

    x_primary = np.zeros_like(est_primary)
    x_dual = np.zeros_like(est_dual)
    for i in range(fs.m):
        xp, xd = to_physical(nodes, est_primary[i], est_dual[i])
        x_primary[i] = xp
        x_dual[i] = xd

    diagnostics = {
        "cond_uu": gram.cond_uu,
        "ref_cond_uu": ref_gram.cond_uu,
        "tau": fs.tau,
        "sigma": fs.sigma,
        "n": n,
        "m": fs.m,
        "monotone": nodes.monotone,
    }
    return Invert2DResult(
        zeta_primary=nodes.primary,
        zeta_dual=nodes.dual,
        nu=fs.sources_y.copy(),
        est_primary=est_primary,
        est_dual=est_dual,
        x_primary=x_primary,
        x_dual=x_dual,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# block series file round trip
# ---------------------------------------------------------------------------


def write_block_series(
    dirpath: str, fs: BlockTransferSeries, provenance: dict[str, str] | None = None
) -> str:
    """Write one CSV per block plus a manifest; returns the manifest path."""
    os.makedirs(dirpath, exist_ok=True)
    count = fs.blocks.shape[0]
    names = [f"block_{k:04d}.csv" for k in range(count)]
    for k, name in enumerate(names):
        with open(os.path.join(dirpath, name), "w") as fh:
            for row in fs.blocks[k]:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    manifest = os.path.join(dirpath, "manifest.csv")
    with open(manifest, "w") as fh:
        for key, val in (provenance or {}).items():
            fh.write(f"# {key} = {val}\n")
        fh.write(f"tau,{float(fs.tau)!r}\n")
        fh.write(f"sigma,{float(fs.sigma)!r}\n")
        fh.write(f"m,{fs.m}\n")
        fh.write(f"count,{count}\n")
        fh.write("sources_y," + ",".join(repr(float(y)) for y in fs.sources_y) + "\n")
        for name in names:
            fh.write(f"block,{name}\n")
    return manifest


def read_block_series(dirpath: str) -> BlockTransferSeries:
    manifest = os.path.join(dirpath, "manifest.csv")
    meta: dict[str, str] = {}
    names: list[str] = []
    sources: list[float] = []
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(",")
            if key == "block":
                names.append(rest)
            elif key == "sources_y":
                sources = [float(tok) for tok in rest.split(",") if tok]
            else:
                meta[key] = rest
    count = int(meta["count"])
    m = int(meta["m"])
    if len(names) != count:
        raise ValueError(f"manifest promises {count} blocks but lists {len(names)}")
    blocks = np.zeros((count, m, m))
    for k, name in enumerate(names):
        rows = []
        with open(os.path.join(dirpath, name)) as fh:
            for line in fh:
                if line.strip():
                    rows.append([float(tok) for tok in line.strip().split(",")])
        arr = np.array(rows)
        if arr.shape != (m, m):
            raise ValueError(f"block file {name} has shape {arr.shape}, expected {(m, m)}")
        blocks[k] = arr
    return BlockTransferSeries(
        tau=float(meta["tau"]),
        sigma=float(meta["sigma"]),
        blocks=blocks,
        sources_y=np.array(sources),
    )
