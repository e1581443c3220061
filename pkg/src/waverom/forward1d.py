"""One-dimensional forward simulation of boundary transfer data.

The continuous problem is a 1D acoustic wave equation on ``[0, xmax]`` with
a reflecting (Neumann) boundary at the origin, where a Gaussian-smoothed
impulsive source is fired and the response is recorded, and a homogeneous
Dirichlet condition at the far wall.  All discrete work happens in
*traveltime* (slowness) coordinates ``xt(x) = int_0^x dx'/v(x')``: in that
frame the wave front advances one coordinate unit per time unit regardless
of the medium, and the governing operator takes the divergence form

    (A u)(xt) = -v(xt) d/dxt [ (1/v(xt)) du/dxt ],

self-adjoint under the weight ``1/v(xt) dxt``.

Discretization uses a pair of interleaved staggered grids (primary nodes
carry the pressure-like field, dual nodes the flux-like field) with
harmonic-mean velocity averaging on primary cells and arithmetic-mean
averaging on dual cells.  Snapshots of the evolution are evaluated
*spectrally* -- through the operator's eigendecomposition -- so there is no
CFL restriction and no time-stepping error; an explicit staggered leapfrog
identity nevertheless holds exactly and is used as a cross-check in the
test-suite.

The boundary measurement

    f_k = <<b, u_k>>,   u_k = cos(k tau sqrt(A)) b,

sampled at uniform multiples of the time step ``tau``, is the data object
(:class:`TransferSeries`) every downstream module consumes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg

__all__ = [
    "VelocityModel",
    "StaggeredGrid",
    "DiscreteOperator",
    "SnapshotSet",
    "TransferSeries",
    "ForwardRun",
    "build_grid",
    "discretize_operator",
    "source_vector",
    "propagate_snapshots",
    "measure_transfer",
    "synthesize_transfer",
]


# ---------------------------------------------------------------------------
# velocity models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityModel:
    """A 1D wave-speed profile sampled on a uniform spatial grid.

    ``samples`` holds strictly positive speeds at ``len(samples)`` equally
    spaced points spanning ``[0, xmax]`` inclusive; between samples the
    profile is linearly interpolated.  ``role`` distinguishes the unknown
    medium under investigation (``"true"``) from the known background used
    to build reference quantities (``"reference"``).
    """

    xmax: float
    samples: np.ndarray
    role: str = "true"

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if not self.xmax > 0:
            raise ValueError(f"xmax must be positive, got {self.xmax}")
        if s.ndim != 1 or s.size < 2:
            raise ValueError("samples must be a 1D array with at least two entries")
        if not np.isfinite(s).all() or np.any(s <= 0):
            raise ValueError("velocity samples must be finite and strictly positive")
        if self.role not in ("true", "reference"):
            raise ValueError(f"role must be 'true' or 'reference', got {self.role!r}")
        object.__setattr__(self, "samples", s)

    @classmethod
    def constant(cls, v: float, xmax: float = 1.0, num: int = 8001, role: str = "true") -> "VelocityModel":
        # generous default sampling so the model satisfies the
        # finer-than-the-grid precondition of discretize_operator
        return cls(xmax=xmax, samples=np.full(max(num, 2), float(v)), role=role)

    @property
    def positions(self) -> np.ndarray:
        return np.linspace(0.0, self.xmax, self.samples.size)

    def value_at(self, x: np.ndarray | float) -> np.ndarray | float:
        return np.interp(x, self.positions, self.samples)

    @property
    def v0(self) -> float:
        """Wave speed at the measurement boundary ``x = 0``."""
        return float(self.samples[0])

    # -- traveltime coordinate maps ------------------------------------

    def _cumulative_traveltime(self) -> np.ndarray:
        x = self.positions
        slowness = 1.0 / self.samples
        inc = 0.5 * (slowness[1:] + slowness[:-1]) * np.diff(x)
        return np.concatenate(([0.0], np.cumsum(inc)))

    def traveltime_length(self) -> float:
        """Total one-way traveltime across the model, ``int_0^xmax dx/v``."""
        return float(self._cumulative_traveltime()[-1])

    def traveltime_of(self, x: np.ndarray | float) -> np.ndarray | float:
        return np.interp(x, self.positions, self._cumulative_traveltime())

    def position_at_traveltime(self, t: np.ndarray | float) -> np.ndarray | float:
        return np.interp(t, self._cumulative_traveltime(), self.positions)

    def value_at_traveltime(self, t: np.ndarray | float) -> np.ndarray | float:
        return self.value_at(self.position_at_traveltime(t))


# ---------------------------------------------------------------------------
# staggered grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StaggeredGrid:
    """Interleaved primary/dual grids on ``[0, xmax]``.

    Primary nodes sit at ``(j-1) h`` for ``j = 1..m`` (the first one on the
    measurement boundary), dual nodes at the cell midpoints ``(j-1/2) h``.
    An implicit primary node at ``xmax`` carries the homogeneous Dirichlet
    wall, and an implicit dual node at ``0`` closes the first dual cell, so
    the first dual step is ``h/2`` while every other step is ``h``.
    """

    m: int
    xmax: float
    primary: np.ndarray = field(repr=False)
    dual: np.ndarray = field(repr=False)
    steps_primary: np.ndarray = field(repr=False)
    steps_dual: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.xmax / self.m


def build_grid(m: int, xmax: float) -> StaggeredGrid:
    """Uniform staggered grid with ``m`` primary and ``m`` dual nodes."""
    if m < 4:
        raise ValueError(f"grid needs at least 4 cells, got m={m}")
    if not xmax > 0:
        raise ValueError(f"xmax must be positive, got {xmax}")
    h = xmax / m
    j = np.arange(1, m + 1, dtype=float)
    primary = (j - 1.0) * h
    dual = (j - 0.5) * h
    steps_primary = np.full(m, h)
    steps_dual = np.full(m, h)
    steps_dual[0] = 0.5 * h
    return StaggeredGrid(
        m=m,
        xmax=float(xmax),
        primary=primary,
        dual=dual,
        steps_primary=steps_primary,
        steps_dual=steps_dual,
    )


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------


class DiscreteOperator:
    """Staggered finite-difference form of the traveltime-domain operator.

    The operator acts on primary-grid vectors.  Row ``j`` reads

        (A u)^j = -(vp_j / hd_j) * [ (u^{j+1}-u^j)/(vd_j ht_j)
                                     - (u^j-u^{j-1})/(vd_{j-1} ht_{j-1}) ]

    with ``u^0`` eliminated by the reflecting boundary (the backward
    difference in the first row uses the implicit dual node at 0) and
    ``u^{m+1} = 0`` at the Dirichlet wall.  ``A`` is self-adjoint and
    positive definite under the primary weight ``hd_j / vp_j``; the
    similarity transform by ``sqrt`` of that weight is symmetric
    tridiagonal and is what the eigensolver sees.

    Attributes:
        grid: the staggered grid.
        v_primary: harmonic-mean speeds on primary cells (length m).
        v_dual: arithmetic-mean speeds on dual cells (length m).
        weight_primary: quadrature/inner-product weights ``hd/vp``.
        weight_dual: dual-grid weights ``ht * vd``.
    """

    def __init__(self, grid: StaggeredGrid, v_primary: np.ndarray, v_dual: np.ndarray):
        self.grid = grid
        self.v_primary = np.asarray(v_primary, dtype=float)
        self.v_dual = np.asarray(v_dual, dtype=float)
        if self.v_primary.shape != (grid.m,) or self.v_dual.shape != (grid.m,):
            raise ValueError("velocity averages must have one entry per grid cell")
        if np.any(self.v_primary <= 0) or np.any(self.v_dual <= 0):
            raise ValueError("averaged velocities must be strictly positive")
        self.weight_primary = grid.steps_dual / self.v_primary
        self.weight_dual = grid.steps_primary * self.v_dual
        # symmetrized tridiagonal band
        kappa = 1.0 / (self.v_dual * grid.steps_primary)
        kappa_prev = np.concatenate(([0.0], kappa[:-1]))
        ratio = self.v_primary / grid.steps_dual
        self.sym_diag = ratio * (kappa + kappa_prev)
        self.sym_offdiag = -kappa[:-1] * np.sqrt(
            (self.v_primary[:-1] * self.v_primary[1:])
            / (grid.steps_dual[:-1] * grid.steps_dual[1:])
        )
        self._dw = np.sqrt(self.weight_primary)
        self._eig: linalg.EigDecomposition | None = None

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def v0(self) -> float:
        """Speed at the measurement boundary (first primary cell average)."""
        return float(self.v_primary[0])

    def eig(self) -> linalg.EigDecomposition:
        """Eigendecomposition of the symmetrized operator (cached)."""
        if self._eig is None:
            self._eig = linalg.tridiag_eig(
                self.sym_diag, self.sym_offdiag, role="discretized wave operator"
            )
        return self._eig

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply the operator itself to primary-grid data."""
        return self.apply_function(lambda lam: lam, u)

    def apply_function(
        self, f: Callable[[np.ndarray], np.ndarray], u: np.ndarray
    ) -> np.ndarray:
        """Apply ``f(A)`` to a primary vector (or columns of a matrix).

        Computed through the symmetrized eigendecomposition:
        ``f(A) u = Dw^{-1} Z f(lam) Z^T Dw u``.
        """
        eig = self.eig()
        u = np.asarray(u, dtype=float)
        dw = self._dw if u.ndim == 1 else self._dw[:, None]
        return linalg.apply_matrix_function(eig, f, dw * u) / dw

    def to_dual(self, u: np.ndarray) -> np.ndarray:
        """Weighted forward difference mapping primary data to dual nodes:
        ``(S u)^j = (u^{j+1} - u^j) / (vd_j ht_j)`` with ``u^{m+1} = 0``."""
        u = np.asarray(u, dtype=float)
        shifted = np.zeros_like(u)
        shifted[:-1] = u[1:]
        denom = self.v_dual * self.grid.steps_primary
        return (shifted - u) / (denom if u.ndim == 1 else denom[:, None])

    def to_primary(self, w: np.ndarray) -> np.ndarray:
        """Weighted backward difference mapping dual data to primary nodes:
        ``(R w)^j = -vp_j (w^j - w^{j-1}) / hd_j`` with ``w^0 = 0``.

        The built-in minus sign makes ``R`` the adjoint of :meth:`to_dual`
        with respect to the primary/dual weights, so ``A = R S`` exactly and
        ``A`` is nonnegative.
        """
        w = np.asarray(w, dtype=float)
        shifted = np.zeros_like(w)
        shifted[1:] = w[:-1]
        factor = self.v_primary / self.grid.steps_dual
        return -(w - shifted) * (factor if w.ndim == 1 else factor[:, None])

    def inner_primary(self, u1: np.ndarray, u2: np.ndarray) -> float:
        return float(np.dot(u1 * self.weight_primary, u2))

    def inner_dual(self, w1: np.ndarray, w2: np.ndarray) -> float:
        return float(np.dot(w1 * self.weight_dual, w2))


def _fine_slowness_profile(
    v: VelocityModel, grid: StaggeredGrid, refine: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the model's speed on a fine uniform traveltime grid.

    The fine step divides ``h/2`` so every primary and dual cell boundary
    lands exactly on a fine node, making the averaging integrals simple
    partial sums.
    """
    nfine = 2 * refine * grid.m
    tfine = np.linspace(0.0, grid.xmax, nfine + 1)
    cum = v._cumulative_traveltime()
    vfine = np.interp(tfine, cum, v.samples)
    return tfine, vfine


def discretize_operator(
    grid: StaggeredGrid, v: VelocityModel, refine: int = 16
) -> DiscreteOperator:
    """Discretize the traveltime-domain operator for ``v`` on ``grid``.

    The grid's axis is the model's traveltime coordinate, so ``grid.xmax``
    must equal ``v.traveltime_length()``; this is validated.  Primary cells
    get the harmonic mean of the speed, dual cells the arithmetic mean, both
    evaluated by composite trapezoid quadrature on a ``refine``-times finer
    sampling of the profile.
    """
    ttlen = v.traveltime_length()
    if abs(ttlen - grid.xmax) > 1e-8 * max(ttlen, grid.xmax):
        raise ValueError(
            f"grid axis length {grid.xmax} does not match the model's "
            f"traveltime length {ttlen}; build the grid with "
            "build_grid(m, v.traveltime_length())"
        )
    if v.samples.size < grid.m:
        raise ValueError(
            f"model must be sampled at least as finely as the grid "
            f"({v.samples.size} samples < m={grid.m})"
        )
    tfine, vfine = _fine_slowness_profile(v, grid, refine)
    dt = tfine[1] - tfine[0]

    def cumint(g: np.ndarray) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * dt)))

    cum_slow = cumint(1.0 / vfine)
    cum_speed = cumint(vfine)
    m = grid.m
    # fine indices of dual-cell boundaries (0, h/2, 3h/2, ...) and primary
    # cell boundaries (0, h, 2h, ..., mh)
    idx_dual = np.concatenate(([0], (2 * np.arange(1, m + 1) - 1) * refine))
    idx_primary = 2 * refine * np.arange(0, m + 1)
    v_primary = grid.steps_dual / np.diff(cum_slow[idx_dual])
    v_dual = np.diff(cum_speed[idx_primary]) / grid.steps_primary
    return DiscreteOperator(grid, v_primary, v_dual)


# ---------------------------------------------------------------------------
# source, snapshots, measurement
# ---------------------------------------------------------------------------


def source_vector(op: DiscreteOperator, sigma: float) -> np.ndarray:
    """Gaussian-filtered boundary impulse ``b = v(0) exp(-sigma^2 A / 4) d``.

    ``d`` is the discrete delta at the first primary node (``1/hd_1`` at
    node 1), so ``b`` is a half-Gaussian hump of spatial standard deviation
    ``sigma * v / sqrt(2)`` hugging the reflecting boundary.
    """
    if not sigma > 0:
        raise ValueError(f"pulse width sigma must be positive, got {sigma}")
    delta = np.zeros(op.m)
    delta[0] = 1.0 / op.grid.steps_dual[0]
    return op.v0 * op.apply_function(lambda lam: np.exp(-0.25 * sigma**2 * lam), delta)


@dataclass(frozen=True)
class SnapshotSet:
    """Wavefield snapshots on the staggered grid.

    ``primary[:, k]`` is ``u_k = cos(k tau sqrt(A)) b`` at the primary
    nodes; ``dual[:, k]`` is the flux-like companion field at the staggered
    half time steps ``(k + 1/2) tau`` on the dual nodes.  Together they
    satisfy the exact staggered leapfrog two-step identity.
    """

    tau: float
    primary: np.ndarray
    dual: np.ndarray

    @property
    def count(self) -> int:
        return self.primary.shape[1]


def propagate_snapshots(
    op: DiscreteOperator, b: np.ndarray, tau: float, count: int
) -> SnapshotSet:
    """Evaluate ``count`` primary and dual snapshots spectrally.

    No time-stepping is involved: cosines and sincs of the operator act on
    the source through the eigendecomposition, so arbitrarily large ``tau``
    is admissible (no CFL restriction) and each snapshot is exact for the
    discrete operator.
    """
    if not tau > 0:
        raise ValueError(f"time step tau must be positive, got {tau}")
    if count < 1:
        raise ValueError(f"snapshot count must be at least 1, got {count}")
    eig = op.eig()
    dw = op._dw
    qb = eig.vectors.T @ (dw * np.asarray(b, dtype=float))
    root = np.sqrt(np.maximum(eig.values, 0.0))
    k = np.arange(count, dtype=float)
    phases = np.outer(root, tau * k)
    primary = (eig.vectors @ (np.cos(phases) * qb[:, None])) / dw[:, None]
    half_phases = np.outer(root, tau * (k + 0.5))
    # sin(t sqrt(lam))/sqrt(lam), continuous (= t) through lam -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(
            root[:, None] > 0.0,
            np.sin(half_phases) / np.where(root[:, None] > 0.0, root[:, None], 1.0),
            tau * (k + 0.5)[None, :],
        )
    shifted = (eig.vectors @ (sinc * qb[:, None])) / dw[:, None]
    dual = op.to_dual(shifted)
    return SnapshotSet(tau=float(tau), primary=primary, dual=dual)


@dataclass(frozen=True)
class TransferSeries:
    """Boundary transfer data ``f_k`` sampled at ``t = k tau``.

    ``values[k] = <<b, u_k>>`` in the primary weighted inner product.  The
    series length is even, ``2n``, where ``n`` is the reduced-model order
    the data supports.
    """

    tau: float
    sigma: float
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2 or vals.size % 2:
            raise ValueError(
                f"transfer series must hold an even number >= 2 of samples, got {vals.size}"
            )
        if not np.isfinite(vals).all():
            raise ValueError("transfer samples must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size // 2

    def __len__(self) -> int:
        return self.values.size

    # -- serialization ---------------------------------------------------

    def to_csv(self, path: str, provenance: dict[str, str] | None = None) -> None:
        """Write the series: optional ``#`` comment lines, a ``tau,sigma,n``
        header line, then one sample per line."""
        with open(path, "w") as fh:
            fh.write(self.dumps(provenance))

    def dumps(self, provenance: dict[str, str] | None = None) -> str:
        buf = io.StringIO()
        for key, val in (provenance or {}).items():
            buf.write(f"# {key} = {val}\n")
        buf.write(f"{float(self.tau)!r},{float(self.sigma)!r},{self.n}\n")
        for v in self.values:
            buf.write(f"{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path: str) -> "TransferSeriesWithMeta":
        with open(path) as fh:
            return cls.loads(fh.read())

    @classmethod
    def loads(cls, text: str) -> "TransferSeriesWithMeta":
        provenance: dict[str, str] = {}
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        body: list[str] = []
        for ln in lines:
            if ln.startswith("#"):
                stripped = ln.lstrip("#").strip()
                if "=" in stripped:
                    key, _, val = stripped.partition("=")
                    provenance[key.strip()] = val.strip()
                continue
            body.append(ln)
        if not body:
            raise ValueError("transfer CSV contains no data lines")
        head = body[0].split(",")
        if len(head) != 3:
            raise ValueError(f"malformed transfer header {body[0]!r}; expected tau,sigma,n")
        tau, sigma, n = float(head[0]), float(head[1]), int(head[2])
        values = np.array([float(ln) for ln in body[1:]])
        if values.size != 2 * n:
            raise ValueError(
                f"transfer CSV header promises {2 * n} samples but {values.size} follow"
            )
        series = cls(tau=tau, sigma=sigma, values=values)
        return TransferSeriesWithMeta(series=series, provenance=provenance)


@dataclass(frozen=True)
class TransferSeriesWithMeta:
    series: TransferSeries
    provenance: dict[str, str]


def measure_transfer(
    snapshots: SnapshotSet, b: np.ndarray, weight: np.ndarray, *, sigma: float
) -> TransferSeries:
    """Collapse snapshots to the boundary transfer series
    ``f_k = <<b, u_k>>`` under the supplied primary weights."""
    b = np.asarray(b, dtype=float)
    weight = np.asarray(weight, dtype=float)
    values = (b * weight) @ snapshots.primary
    return TransferSeries(tau=snapshots.tau, sigma=float(sigma), values=values)


# ---------------------------------------------------------------------------
# end-to-end driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForwardRun:
    """Bundle of everything one synthetic experiment produced."""

    series: TransferSeries
    op: DiscreteOperator
    source: np.ndarray
    snapshots: SnapshotSet


def synthesize_transfer(
    v: VelocityModel, sigma: float, tau: float, n: int, m: int = 2000
) -> ForwardRun:
    """Run the full synthetic pipeline for a model: grid on the model's
    traveltime axis, operator, smoothed source, ``2n`` spectral snapshots,
    boundary measurement."""
    if n < 1:
        raise ValueError(f"reduced order n must be at least 1, got {n}")
    grid = build_grid(m, v.traveltime_length())
    op = discretize_operator(grid, v)
    b = source_vector(op, sigma)
    snaps = propagate_snapshots(op, b, tau, 2 * n)
    series = measure_transfer(snaps, b, op.weight_primary, sigma=sigma)
    return ForwardRun(series=series, op=op, source=b, snapshots=snaps)
