"""Direct 1D velocity estimation from boundary transfer data.

The estimate rests on two facts established elsewhere in the package: the
continued-fraction coefficients of the reduced model are computable from
data alone (:mod:`waverom.gammas`), and the orthogonalized snapshots they
normalize are localized pulses whose positions depend only weakly on the
medium.  So:

1. run the snapshot orthogonalization on a *known reference* medium and
   record where its orthogonalized pulses sit -- the centers of mass of
   their squared profiles form an interleaved primary/dual grid in the
   traveltime coordinate (:func:`reference_grid`);
2. form nodewise velocity estimates from coefficient ratios,
   ``v(primary node j) ~= v0 * ghat0_j / ghat_j`` and
   ``v(dual node j) ~= v0 * g_j / g0_j`` (:func:`reconstruct`);
3. convert the traveltime nodes to physical positions by accumulating the
   estimated velocities along the interleaved grid (:func:`to_physical`).

No iteration, no optimization: one pass of linear algebra on 2n data
samples.  :func:`invert` chains the whole pipeline.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forward1d import (
    VelocityModel,
    build_grid,
    discretize_operator,
    source_vector,
    TransferSeries,
)
from .gammas import GammaSet, OrthoSnapshots, gammas_from_measure, orthogonalize_reference
from .romdata import assemble_gram, spectral_measure

__all__ = [
    "TravelTimeGrid",
    "InversionResult",
    "reference_grid",
    "reconstruct",
    "to_physical",
    "invert",
    "read_result_csv",
]

#: Gram condition number beyond which a tuning warning is attached.
COND_WARN = 1e6

TAU_GUIDANCE = (
    "time step tau is poorly matched to the pulse width sigma: start from a "
    "relatively large tau (a few times sigma) and decrease it while the Gram "
    "condition number stays moderate; overly small tau makes successive "
    "snapshots nearly linearly dependent, overly large tau lets the node "
    "grid skip structure"
)


@dataclass(frozen=True)
class TravelTimeGrid:
    """Interleaved node grid in the traveltime coordinate.

    ``primary[j]`` is the center of mass of the j-th orthogonalized primary
    pulse, ``dual[j]`` of the j-th dual pulse.  ``monotone`` records whether
    the fully interleaved sequence ``primary_1 <= dual_1 <= primary_2 <=
    ...`` is strictly increasing -- when it is not, the time step is poorly
    chosen and downstream estimates are suspect (they are still produced;
    nothing is re-sorted or smoothed).
    """

    primary: np.ndarray
    dual: np.ndarray
    monotone: bool

    @property
    def n(self) -> int:
        return self.primary.size

    def interleaved(self) -> np.ndarray:
        """Nodes in the order primary_1, dual_1, primary_2, dual_2, ..."""
        out = np.empty(2 * self.n)
        out[0::2] = self.primary
        out[1::2] = self.dual
        return out


def _interleave_is_monotone(primary: np.ndarray, dual: np.ndarray) -> bool:
    seq = np.empty(2 * primary.size)
    seq[0::2] = primary
    seq[1::2] = dual
    return bool(np.all(np.diff(seq) > 0.0) and seq[0] >= 0.0)


def reference_grid(ortho: OrthoSnapshots, v0: VelocityModel) -> TravelTimeGrid:
    """Centers of mass of the squared orthogonalized reference snapshots.

    Primary nodes use the 1/v-weighted quadrature on the primary grid, dual
    nodes the v-weighted quadrature on the dual grid; the ``ghat``/``g``
    normalizations make each integrand a probability density, so the sums
    are genuine centers of mass.
    """
    if v0.role != "reference":
        raise ValueError("reference_grid expects a model with role='reference'")
    op = ortho.op
    gs = ortho.gammas
    xp = op.grid.primary
    xd = op.grid.dual
    primary = gs.ghat * np.einsum(
        "i,ij,ij,i->j", xp, ortho.primary, ortho.primary, op.weight_primary
    )
    dual = gs.g * np.einsum(
        "i,ij,ij,i->j", xd, ortho.dual, ortho.dual, op.weight_dual
    )
    return TravelTimeGrid(
        primary=primary,
        dual=dual,
        monotone=_interleave_is_monotone(primary, dual),
    )


@dataclass(frozen=True)
class InversionResult:
    """Nodewise velocity estimates on the interleaved grid.

    ``estimates_primary[j]`` approximates the velocity at traveltime node
    ``grid.primary[j]`` (physical position ``physical_primary[j]``), and
    likewise for the dual arrays.  ``diagnostics`` carries run metadata
    (Gram condition number, tau, sigma, n, monotonicity, any warning).
    """

    grid: TravelTimeGrid
    estimates_primary: np.ndarray
    estimates_dual: np.ndarray
    physical_primary: np.ndarray
    physical_dual: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("node_type,traveltime_pos,physical_pos,v_estimate\n")
        for j in range(self.n):
            buf.write(
                f"primary,{float(self.grid.primary[j])!r},{float(self.physical_primary[j])!r},"
                f"{float(self.estimates_primary[j])!r}\n"
            )
            buf.write(
                f"dual,{float(self.grid.dual[j])!r},{float(self.physical_dual[j])!r},"
                f"{float(self.estimates_dual[j])!r}\n"
            )
        return buf.getvalue()

    def sidecar(self, **extra: str) -> str:
        keys = ["cond_uu", "tau", "sigma", "n", "monotone"]
        lines = [f"{k} = {self.diagnostics[k]}" for k in keys if k in self.diagnostics]
        for k, v in self.diagnostics.items():
            if k not in keys:
                lines.append(f"{k} = {v}")
        lines.extend(f"{k} = {v}" for k, v in extra.items())
        return "\n".join(lines) + "\n"

    def write_sidecar(self, path: str, **extra: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.sidecar(**extra))


def read_result_csv(path: str) -> dict[str, np.ndarray]:
    """Read an :class:`InversionResult` CSV back into arrays keyed by
    ``node_type`` plus ``traveltime_pos`` / ``physical_pos`` / ``v_estimate``
    suffixes."""
    rows = {"primary": [], "dual": []}
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("node_type"):
            raise ValueError(f"unexpected result header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            kind, tt, xp, ve = line.strip().split(",")
            rows[kind].append((float(tt), float(xp), float(ve)))
    out: dict[str, np.ndarray] = {}
    for kind, data in rows.items():
        arr = np.array(data) if data else np.zeros((0, 3))
        out[f"{kind}_traveltime_pos"] = arr[:, 0]
        out[f"{kind}_physical_pos"] = arr[:, 1]
        out[f"{kind}_v_estimate"] = arr[:, 2]
    return out


def reconstruct(
    data_gammas: GammaSet,
    ref_gammas: GammaSet,
    grid: TravelTimeGrid,
    v0: VelocityModel,
    diagnostics: dict | None = None,
) -> InversionResult:
    """Nodewise velocity estimates from coefficient ratios.

    The primary coefficient behaves like a local average of 1/v, so the
    primary estimate divides reference by data; the dual coefficient
    behaves like a local average of v, so the dual estimate divides data by
    reference.  The reference velocity is evaluated *at the node* (exact
    for a constant reference, interpolated through the traveltime map
    otherwise).
    """
    if data_gammas.n != ref_gammas.n or data_gammas.n != grid.n:
        raise ValueError(
            f"order mismatch: data n={data_gammas.n}, reference n={ref_gammas.n}, "
            f"grid n={grid.n}"
        )
    vref_primary = np.asarray(v0.value_at_traveltime(grid.primary), dtype=float)
    vref_dual = np.asarray(v0.value_at_traveltime(grid.dual), dtype=float)
    est_primary = vref_primary * ref_gammas.ghat / data_gammas.ghat
    est_dual = vref_dual * data_gammas.g / ref_gammas.g
    phys_primary, phys_dual = to_physical(grid, est_primary, est_dual)
    return InversionResult(
        grid=grid,
        estimates_primary=est_primary,
        estimates_dual=est_dual,
        physical_primary=phys_primary,
        physical_dual=phys_dual,
        diagnostics=dict(diagnostics or {}),
    )


def to_physical(
    grid: TravelTimeGrid,
    estimates_primary: np.ndarray,
    estimates_dual: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Map traveltime nodes to physical positions.

    The inverse of the traveltime transform is the cumulative integral of
    the velocity, which is only known at the nodes; it is accumulated as a
    signed endpoint-rule sum along the interleaved chain seeded at
    ``primary_0 = 0``:

        dual_phys[j]    = sum_{i<=j} (dual[i] - primary[i-1]) * v(dual[i])
                        + sum_{i<j}  (primary[i] - dual[i])   * v(primary[i])
        primary_phys[j] = same with the second sum through i = j.

    The segments telescope to the node position regardless of node
    ordering, so non-monotone grids are mapped as-is (and flagged
    upstream).
    """
    n = grid.n
    dual_seg = grid.dual - np.concatenate(([0.0], grid.primary[:-1]))
    primary_seg = grid.primary - grid.dual
    dual_terms = dual_seg * estimates_dual
    primary_terms = primary_seg * estimates_primary
    cum_dual = np.cumsum(dual_terms)
    cum_primary = np.cumsum(primary_terms)
    phys_dual = cum_dual + np.concatenate(([0.0], cum_primary[:-1]))
    phys_primary = cum_dual + cum_primary
    assert phys_primary.shape == (n,) and phys_dual.shape == (n,)
    return phys_primary, phys_dual


def invert(
    f: TransferSeries,
    v0: VelocityModel,
    m: int = 2000,
    n: int | None = None,
) -> InversionResult:
    """Full direct inversion of one transfer series.

    Steps: Gram assembly and spectral measure from the data; data-route
    coefficients; reference-side snapshot orthogonalization on a grid over
    the reference medium's own traveltime axis; center-of-mass node grid;
    ratio estimates; physical mapping.  ``m`` controls the reference solver
    resolution; ``n`` defaults to the full order the data supports.

    Ill-conditioned data triggers a ``UserWarning`` with tuning guidance
    and is recorded in the diagnostics; genuinely rank-deficient data
    raises instead.
    """
    if v0.role != "reference":
        raise ValueError(
            "invert expects the background model with role='reference' "
            "(its speed at x=0 must match the true medium's)"
        )
    if n is None:
        n = f.n
    if n < 1 or n > f.n:
        raise ValueError(f"order n must be in [1, {f.n}], got {n}")
    if n < f.n:
        f = TransferSeries(tau=f.tau, sigma=f.sigma, values=f.values[: 2 * n])

    gram = assemble_gram(f)
    meas = spectral_measure(gram)
    data_gammas = gammas_from_measure(meas, f.tau)

    ref_grid_axis = v0.traveltime_length()
    grid = build_grid(m, ref_grid_axis)
    op0 = discretize_operator(grid, v0)
    b0 = source_vector(op0, f.sigma)
    ortho = orthogonalize_reference(op0, b0, f.tau, n)
    nodes = reference_grid(ortho, v0)

    diagnostics: dict = {
        "cond_uu": gram.cond_uu,
        "tau": f.tau,
        "sigma": f.sigma,
        "n": n,
        "monotone": nodes.monotone,
    }
    window = (2 * n - 1) * f.tau
    diagnostics["window"] = window
    diagnostics["round_trip_traveltime"] = 2.0 * ref_grid_axis
    if gram.cond_uu > COND_WARN:
        diagnostics["warning"] = TAU_GUIDANCE
        warnings.warn(
            f"Gram condition number {gram.cond_uu:.3e} is large; {TAU_GUIDANCE}",
            UserWarning,
            stacklevel=2,
        )
    return reconstruct(data_gammas, ortho.gammas, nodes, v0, diagnostics)
