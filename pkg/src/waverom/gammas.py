"""Continued-fraction coefficients of the reduced model, two ways.

The wavefield snapshots can be orthogonalized by a three-point recursion
that alternates between the primary field and its flux companion; the
reciprocal squared norms produced along the way,

    ghat_j = 1 / ||uhat_j||^2   (primary, weight 1/v),
    g_j    = 1 / ||what_j||^2   (dual,    weight v),

are the continued-fraction coefficients of the reduced model and act like
local averages of 1/v and v around the j-th orthogonalized pulse.  They are
computable two independent ways:

* :func:`orthogonalize_reference` runs the snapshot recursion on a *known*
  medium (used for the reference background), producing the orthogonalized
  snapshots themselves alongside the coefficients;
* :func:`gammas_from_measure` runs an equivalent phase-space recursion on
  nothing but the spectral measure extracted from measured boundary data,
  so the same coefficients are obtained for the unknown medium.

:func:`gammas_from_jacobi` / :func:`jacobi_from_gammas` convert between the
tridiagonal form and the coefficients in closed form, giving a third route
used as a cross-check, and :func:`gram_schmidt_check` verifies that the
recursion's output is collinear with classical Gram-Schmidt on the raw
snapshots.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import linalg
from .forward1d import DiscreteOperator, SnapshotSet
from .romdata import JacobiROM, SpectralMeasure

__all__ = [
    "GammaSet",
    "OrthoSnapshots",
    "GramSchmidtReport",
    "xi",
    "xi_inverse",
    "orthogonalize_reference",
    "gammas_from_measure",
    "gammas_from_jacobi",
    "jacobi_from_gammas",
    "gram_schmidt_check",
]


def xi(x: np.ndarray | float, tau: float) -> np.ndarray | float:
    """Map propagator spectrum to operator spectrum: ``xi(x) = -(2/tau^2)(1-x)``.

    ``-xi`` sends a propagator eigenvalue ``cos(tau sqrt(lam))`` to the
    time-discrete stand-in for ``lam``.
    """
    return -(2.0 / tau**2) * (1.0 - x)


def xi_inverse(lam: np.ndarray | float, tau: float) -> np.ndarray | float:
    """Inverse of :func:`xi`: ``1 + tau^2 lam / 2``."""
    return 1.0 + 0.5 * tau**2 * lam


@dataclass(frozen=True)
class GammaSet:
    """Continued-fraction coefficients ``ghat_1..ghat_n`` and ``g_1..g_n``.

    ``source`` records whether they came from measured data or from a known
    reference medium.  All entries are strictly positive and finite.
    """

    ghat: np.ndarray
    g: np.ndarray
    source: str

    def __post_init__(self) -> None:
        ghat = np.asarray(self.ghat, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if ghat.shape != g.shape or ghat.ndim != 1 or ghat.size == 0:
            raise ValueError("ghat and g must be 1D arrays of equal nonzero length")
        for name, arr in (("ghat", ghat), ("g", g)):
            if not np.isfinite(arr).all() or np.any(arr <= 0):
                raise ValueError(f"{name} entries must be strictly positive and finite")
        if self.source not in ("data", "reference"):
            raise ValueError(f"source must be 'data' or 'reference', got {self.source!r}")
        object.__setattr__(self, "ghat", ghat)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.ghat.size

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("j,ghat_j,g_j,source\n")
        for j in range(self.n):
            buf.write(f"{j + 1},{float(self.ghat[j])!r},{float(self.g[j])!r},{self.source}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class OrthoSnapshots:
    """Orthogonalized snapshots with their coefficients.

    ``primary[:, j]`` is ``uhat_{j+1}`` (orthogonal under the 1/v weight
    with ``<uhat_i, uhat_j> = delta_ij / ghat_j``), ``dual[:, j]`` is
    ``what_{j+1}`` (orthogonal under the v weight).  Keeps a handle on the
    operator they were built from so downstream consumers can reuse its
    grid and weights.
    """

    primary: np.ndarray
    dual: np.ndarray
    gammas: GammaSet
    op: DiscreteOperator

    @property
    def n(self) -> int:
        return self.gammas.n


def _half_step_maps(op: DiscreteOperator, tau: float):
    """Return the pair of flux maps used by the snapshot recursion.

    ``to_dual_flux(u) = (2/tau) S g(A) u`` and
    ``to_primary_flux(w) = (2/tau) g(A) R w`` where
    ``g(A) = A^{-1/2} sin(tau sqrt(A) / 2)``; their composition satisfies
    ``-to_primary_flux(to_dual_flux(u)) = -(2/tau^2)(I - cos(tau sqrt(A))) u``
    exactly, and they are adjoint to each other in the primary/dual weights.
    """

    def half_sinc(lam: np.ndarray) -> np.ndarray:
        root = np.sqrt(np.maximum(lam, 0.0))
        safe = np.where(root > 0.0, root, 1.0)
        return np.where(root > 0.0, np.sin(0.5 * tau * root) / safe, 0.5 * tau)

    def to_dual_flux(u: np.ndarray) -> np.ndarray:
        return (2.0 / tau) * op.to_dual(op.apply_function(half_sinc, u))

    def to_primary_flux(w: np.ndarray) -> np.ndarray:
        return (2.0 / tau) * op.apply_function(half_sinc, op.to_primary(w))

    return to_dual_flux, to_primary_flux


def orthogonalize_reference(
    op: DiscreteOperator, b: np.ndarray, tau: float, n: int
) -> OrthoSnapshots:
    """Orthogonalize the snapshot sequence of a known medium.

    Runs the alternating recursion starting from ``uhat_1 = b``:
    normalize the primary pulse (``ghat_j``), advance the dual field,
    normalize it (``g_j``), retreat the primary field.  The outputs span
    exactly the first ``n`` primary snapshots, and the coefficients equal
    the data-route coefficients of the same medium.
    """
    if n < 1:
        raise ValueError(f"order n must be at least 1, got {n}")
    to_dual_flux, to_primary_flux = _half_step_maps(op, tau)
    m = op.m
    primary = np.zeros((m, n))
    dual = np.zeros((m, n))
    ghat = np.zeros(n)
    g = np.zeros(n)
    u = np.asarray(b, dtype=float).copy()
    w = np.zeros(m)
    for j in range(n):
        norm_u = op.inner_primary(u, u)
        if not (np.isfinite(norm_u) and norm_u > 0):
            raise ArithmeticError(
                f"snapshot orthogonalization broke down at step {j + 1}: "
                f"primary norm {norm_u!r} (span deficiency)"
            )
        ghat[j] = 1.0 / norm_u
        primary[:, j] = u
        w = w + ghat[j] * to_dual_flux(u)
        norm_w = op.inner_dual(w, w)
        if not (np.isfinite(norm_w) and norm_w > 0):
            raise ArithmeticError(
                f"snapshot orthogonalization broke down at step {j + 1}: "
                f"dual norm {norm_w!r} (span deficiency)"
            )
        g[j] = 1.0 / norm_w
        dual[:, j] = w
        u = u - g[j] * to_primary_flux(w)
    gammas = GammaSet(ghat=ghat, g=g, source="reference")
    return OrthoSnapshots(primary=primary, dual=dual, gammas=gammas, op=op)


def gammas_from_measure(meas: SpectralMeasure, tau: float) -> GammaSet:
    """Continued-fraction coefficients from the data's spectral measure.

    Phase-space recursion on vectors of length 2n: the state starts as the
    square-rooted weights duplicated per node, ``sqrt(1/2) * [y_1, y_1,
    ..., y_n, y_n]``, and is advanced by the diagonal map ``L`` holding
    ``+sqrt(lam_l), -sqrt(lam_l)`` per node with ``lam_l = (2/tau^2)(1 -
    theta_l)``; the reciprocal squared norms along the way are the
    coefficients.  Requires only measured data -- no medium knowledge.
    """
    if not tau > 0:
        raise ValueError(f"time step tau must be positive, got {tau}")
    n = meas.n
    y = np.sqrt(meas.weights)
    lam = (2.0 / tau**2) * (1.0 - meas.nodes)
    root = np.sqrt(lam)
    ldiag = np.empty(2 * n)
    ldiag[0::2] = root
    ldiag[1::2] = -root
    mu = np.sqrt(0.5) * np.repeat(y, 2)
    omega = np.zeros(2 * n)
    ghat = np.zeros(n)
    g = np.zeros(n)
    for j in range(n):
        nrm = float(mu @ mu)
        if not (np.isfinite(nrm) and nrm > 0):
            raise ArithmeticError(
                f"phase-space recursion broke down at step {j + 1}: "
                f"state norm {nrm!r}"
            )
        ghat[j] = 1.0 / nrm
        omega = omega + ghat[j] * (ldiag * mu)
        nrm = float(omega @ omega)
        if not (np.isfinite(nrm) and nrm > 0):
            raise ArithmeticError(
                f"phase-space recursion broke down at step {j + 1}: "
                f"costate norm {nrm!r}"
            )
        g[j] = 1.0 / nrm
        mu = mu - g[j] * (ldiag * omega)
    return GammaSet(ghat=ghat, g=g, source="data")


def gammas_from_jacobi(rom: JacobiROM, tau: float) -> GammaSet:
    """Closed-form conversion from tridiagonal entries to coefficients.

    ``ghat_1 = 1/c``; ``g_1 = [(2/tau^2)(1 - alpha_1) ghat_1]^{-1}``; then
    for ``j >= 2``:

        ghat_j = tau^4 / (4 beta_{j-1}^2 ghat_{j-1} g_{j-1}^2),
        g_j    = [(2/tau^2)(1 - alpha_j) ghat_j - 1/g_{j-1}]^{-1}.

    A non-positive intermediate signals inconsistent input and raises with
    the step index.
    """
    if not tau > 0:
        raise ValueError(f"time step tau must be positive, got {tau}")
    alpha = rom.jacobi.diag
    beta = rom.jacobi.offdiag
    n = rom.n
    ghat = np.zeros(n)
    g = np.zeros(n)
    if not rom.c > 0:
        raise ArithmeticError(f"data mass c must be positive, got {rom.c}")
    ghat[0] = 1.0 / rom.c
    for j in range(n):
        if j > 0:
            ghat[j] = tau**4 / (4.0 * beta[j - 1] ** 2 * ghat[j - 1] * g[j - 1] ** 2)
        denom = (2.0 / tau**2) * (1.0 - alpha[j]) * ghat[j]
        if j > 0:
            denom -= 1.0 / g[j - 1]
        if not (np.isfinite(denom) and denom > 1e-300):
            raise ArithmeticError(
                f"closed-form coefficient conversion failed at index {j + 1}: "
                f"non-positive denominator {denom!r} (inconsistent spectrum)"
            )
        g[j] = 1.0 / denom
    return GammaSet(ghat=ghat, g=g, source="data")


def jacobi_from_gammas(gs: GammaSet, tau: float) -> JacobiROM:
    """Inverse of :func:`gammas_from_jacobi`.

    Assembles the tridiagonal of the second-difference form first,
    ``a_j = -(1/ghat_j)(1/g_{j-1} + 1/g_j)`` (with ``1/g_0 = 0``) and
    ``b_j = 1/(g_j sqrt(ghat_j ghat_{j+1}))``, then maps it back to
    propagator form via ``alpha = 1 + tau^2 a / 2``, ``beta = tau^2 b / 2``.
    """
    ghat, g, n = gs.ghat, gs.g, gs.n
    inv_g_prev = np.concatenate(([0.0], 1.0 / g[:-1]))
    a = -(1.0 / ghat) * (inv_g_prev + 1.0 / g)
    alpha = 1.0 + 0.5 * tau**2 * a
    if n > 1:
        b = 1.0 / (g[:-1] * np.sqrt(ghat[:-1] * ghat[1:]))
        beta = 0.5 * tau**2 * b
    else:
        beta = np.zeros(0)
    jac = linalg.JacobiMatrix(diag=alpha, offdiag=beta)
    return JacobiROM(jacobi=jac, c=1.0 / ghat[0])


@dataclass(frozen=True)
class GramSchmidtReport:
    """Collinearity diagnostics between classical Gram-Schmidt on the raw
    snapshots and the recursion's orthogonalized snapshots."""

    angles_primary: np.ndarray
    scales_primary: np.ndarray
    angles_dual: np.ndarray
    scales_dual: np.ndarray

    @property
    def max_angle(self) -> float:
        return float(max(self.angles_primary.max(), self.angles_dual.max()))


def _gs_collinearity(
    raw: np.ndarray, ortho: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized classical Gram-Schmidt on ``raw`` columns, compared
    column-by-column against ``ortho``; returns (angles, scales) where
    ``scales[j]`` is the factor mapping the GS vector onto the recursion's."""
    n = ortho.shape[1]
    angles = np.zeros(n)
    scales = np.zeros(n)
    basis = np.zeros_like(ortho)
    for j in range(n):
        vec = raw[:, j].copy()
        for i in range(j):
            prev = basis[:, i]
            vec -= (np.dot(prev * weight, vec) / np.dot(prev * weight, prev)) * prev
        basis[:, j] = vec
        ref = ortho[:, j]
        dot = np.dot(vec * weight, ref)
        nv = np.sqrt(np.dot(vec * weight, vec))
        nr = np.sqrt(np.dot(ref * weight, ref))
        cosang = np.clip(abs(dot) / (nv * nr), -1.0, 1.0)
        angles[j] = np.arccos(cosang)
        scales[j] = dot / np.dot(vec * weight, vec)
    return angles, scales


def gram_schmidt_check(
    snapshots: SnapshotSet, ortho: OrthoSnapshots, op: DiscreteOperator | None = None
) -> GramSchmidtReport:
    """Verify the recursion's snapshots are collinear with Gram-Schmidt.

    Classical (unnormalized) Gram-Schmidt applied to the raw primary
    snapshots in the 1/v-weighted inner product must reproduce each
    ``uhat_j`` up to a positive scale ``d_j`` (with ``d_1 = 1``), and the
    same on the dual side in the v-weighted inner product.  Purely a
    diagnostic; returns the angles and scales.
    """
    if op is None:
        op = ortho.op
    n = ortho.n
    if snapshots.count < n:
        raise ValueError(
            f"need at least {n} snapshots for the check, got {snapshots.count}"
        )
    angles_p, scales_p = _gs_collinearity(
        snapshots.primary[:, :n], ortho.primary, op.weight_primary
    )
    angles_d, scales_d = _gs_collinearity(
        snapshots.dual[:, :n], ortho.dual, op.weight_dual
    )
    return GramSchmidtReport(
        angles_primary=angles_p,
        scales_primary=scales_p,
        angles_dual=angles_d,
        scales_dual=scales_d,
    )
