"""Tests for the continued-fraction coefficients: the data route, the
reference-medium route, and the closed-form conversions."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waverom.forward1d import VelocityModel, propagate_snapshots, synthesize_transfer
from waverom.gammas import (
    GammaSet,
    gammas_from_jacobi,
    gammas_from_measure,
    gram_schmidt_check,
    jacobi_from_gammas,
    orthogonalize_reference,
    xi,
    xi_inverse,
)
from waverom.linalg import JacobiMatrix
from waverom.romdata import (
    JacobiROM,
    SpectralMeasure,
    assemble_gram,
    lanczos_jacobi,
    spectral_measure,
)


@pytest.fixture(scope="module")
def two_layer_run():
    prof = np.where(np.linspace(0, 1, 2001) < 0.4, 1.0, 1.5)
    v = VelocityModel(xmax=1.0, samples=prof)
    return synthesize_transfer(v, 0.01, 0.025, 8, m=1200)


@pytest.fixture(scope="module")
def two_layer_pieces(two_layer_run):
    run = two_layer_run
    tau = run.series.tau
    n = run.series.n
    meas = spectral_measure(assemble_gram(run.series))
    data_gammas = gammas_from_measure(meas, tau)
    ortho = orthogonalize_reference(run.op, run.source, tau, n)
    return {"run": run, "tau": tau, "n": n, "meas": meas,
            "data": data_gammas, "ortho": ortho}


# ---------------------------------------------------------------------------
# spectral map helpers
# ---------------------------------------------------------------------------


def test_xi_round_trip():
    tau = 0.17
    x = np.linspace(-0.99, 0.99, 11)
    assert np.allclose(xi_inverse(xi(x, tau), tau), x, atol=1e-14)
    assert xi(1.0, tau) == 0.0


# ---------------------------------------------------------------------------
# data route basics
# ---------------------------------------------------------------------------


def test_first_coefficient_is_reciprocal_mass():
    meas = SpectralMeasure(nodes=np.array([0.3]), weights=np.array([2.5]), c=2.5)
    gs = gammas_from_measure(meas, tau=0.1)
    assert gs.ghat[0] == pytest.approx(1.0 / 2.5, rel=1e-14)


def test_order_one_closed_form():
    # single node theta with weight w: ghat_1 = 1/w and
    # g_1 = w tau^2 / (2 (1 - theta))
    theta, w, tau = 0.4, 1.7, 0.2
    meas = SpectralMeasure(nodes=np.array([theta]), weights=np.array([w]), c=w)
    gs = gammas_from_measure(meas, tau)
    assert gs.ghat[0] == pytest.approx(1.0 / w, rel=1e-14)
    assert gs.g[0] == pytest.approx(w * tau**2 / (2.0 * (1.0 - theta)), rel=1e-14)
    # and the closed-form route from the Jacobi matrix agrees
    rom = lanczos_jacobi(meas)
    gs2 = gammas_from_jacobi(rom, tau)
    assert gs2.ghat[0] == pytest.approx(gs.ghat[0], rel=1e-14)
    assert gs2.g[0] == pytest.approx(gs.g[0], rel=1e-14)


def test_measure_recursion_matches_closed_form(two_layer_pieces):
    p = two_layer_pieces
    rom = lanczos_jacobi(p["meas"])
    closed = gammas_from_jacobi(rom, p["tau"])
    assert np.abs(closed.ghat / p["data"].ghat - 1.0).max() < 1e-12
    assert np.abs(closed.g / p["data"].g - 1.0).max() < 1e-12


# ---------------------------------------------------------------------------
# reference route
# ---------------------------------------------------------------------------


def test_reference_route_matches_data_route(two_layer_pieces):
    # the snapshot orthogonalization on the known medium reproduces the
    # coefficients extracted from that medium's boundary data alone
    p = two_layer_pieces
    ref = p["ortho"].gammas
    assert np.abs(p["data"].ghat / ref.ghat - 1.0).max() <= 1e-6
    assert np.abs(p["data"].g / ref.g - 1.0).max() <= 1e-6


def test_orthogonalized_snapshots_have_reciprocal_norms(two_layer_pieces):
    # <uhat_i, uhat_j> = delta_ij / ghat_j in the primary weight, and the
    # dual family mirrors it with g_j
    p = two_layer_pieces
    op = p["run"].op
    ortho = p["ortho"]
    gram_p = ortho.primary.T @ (op.weight_primary[:, None] * ortho.primary)
    gram_d = ortho.dual.T @ (op.weight_dual[:, None] * ortho.dual)
    target_p = np.diag(1.0 / ortho.gammas.ghat)
    target_d = np.diag(1.0 / ortho.gammas.g)
    assert np.abs(gram_p - target_p).max() <= 1e-10 * np.abs(target_p).max()
    assert np.abs(gram_d - target_d).max() <= 1e-10 * np.abs(target_d).max()


def test_orthogonalized_snapshots_stay_in_snapshot_span(two_layer_pieces):
    # uhat_j is a combination of the first j raw snapshots
    p = two_layer_pieces
    run, op = p["run"], p["run"].op
    snaps = propagate_snapshots(op, run.source, p["tau"], p["n"])
    sw = np.sqrt(op.weight_primary)
    for j in range(p["n"]):
        target = p["ortho"].primary[:, j] * sw
        basis = snaps.primary[:, : j + 1] * sw[:, None]
        coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
        resid = np.linalg.norm(basis @ coef - target) / np.linalg.norm(target)
        assert resid <= 1e-8


def test_gram_schmidt_collinearity(two_layer_pieces):
    p = two_layer_pieces
    snaps = propagate_snapshots(p["run"].op, p["run"].source, p["tau"], p["n"])
    report = gram_schmidt_check(snaps, p["ortho"])
    assert report.max_angle <= 1e-6
    # the first orthogonalized snapshot is the source itself: scale 1
    assert report.scales_primary[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(report.scales_primary > 0)
    assert np.all(report.scales_dual > 0)


def test_gram_schmidt_check_needs_enough_snapshots(two_layer_pieces):
    p = two_layer_pieces
    short = propagate_snapshots(p["run"].op, p["run"].source, p["tau"], p["n"] - 2)
    with pytest.raises(ValueError, match="snapshots"):
        gram_schmidt_check(short, p["ortho"])


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------


def test_jacobi_round_trip(two_layer_pieces):
    p = two_layer_pieces
    rom = lanczos_jacobi(p["meas"])
    back = jacobi_from_gammas(gammas_from_jacobi(rom, p["tau"]), p["tau"])
    assert np.abs(back.jacobi.diag - rom.jacobi.diag).max() <= 1e-12
    assert np.abs(back.jacobi.offdiag - rom.jacobi.offdiag).max() <= 1e-12
    assert back.c == pytest.approx(rom.c, rel=1e-12)


def test_coefficients_rebuild_the_lanczos_matrix(two_layer_pieces):
    # data-route coefficients alone reassemble the Jacobi matrix the
    # Lanczos recursion produced from the same measure
    p = two_layer_pieces
    direct = lanczos_jacobi(p["meas"]).jacobi
    rebuilt = jacobi_from_gammas(p["data"], p["tau"]).jacobi
    scale = np.abs(direct.diag).max()
    assert np.abs(rebuilt.diag - direct.diag).max() <= 1e-10 * scale
    assert np.abs(rebuilt.offdiag - direct.offdiag).max() <= 1e-10 * scale


def test_orthonormal_polynomials_at_origin(two_layer_pieces):
    # the orthonormal polynomials of the second-difference tridiagonal,
    # evaluated at 0, recover sqrt(ghat_j / ghat_1)
    p = two_layer_pieces
    ghat, g, n = p["data"].ghat, p["data"].g, p["n"]
    a = -(1.0 / ghat) * (np.concatenate(([0.0], 1.0 / g[:-1])) + 1.0 / g)
    b = 1.0 / (g[:-1] * np.sqrt(ghat[:-1] * ghat[1:]))
    p_prev, p_cur = 0.0, 1.0
    vals = [p_cur]
    for j in range(n - 1):
        p_next = (-a[j] * p_cur - (b[j - 1] * p_prev if j > 0 else 0.0)) / b[j]
        p_prev, p_cur = p_cur, p_next
        vals.append(p_cur)
    assert np.allclose(vals, np.sqrt(ghat / ghat[0]), rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=0, max_value=2**31 - 1),
    st.floats(min_value=0.05, max_value=0.5),
)
def test_round_trip_random_jacobi(n, seed, tau):
    # any tridiagonal with spectrum inside (-1, 1) converts to positive
    # coefficients and back to itself
    rng = np.random.default_rng(seed)
    diag = rng.uniform(-0.2, 0.2, n)
    off = rng.uniform(0.2, 0.45, max(n - 1, 0))
    bound = 1.05 * (np.abs(diag).max() + (2.0 * off.max() if n > 1 else 0.0))
    jac = JacobiMatrix(diag=diag / bound, offdiag=off / bound)
    rom = JacobiROM(jacobi=jac, c=float(rng.uniform(0.5, 3.0)))
    back = jacobi_from_gammas(gammas_from_jacobi(rom, tau), tau)
    assert np.abs(back.jacobi.diag - jac.diag).max() <= 1e-9
    if n > 1:
        assert np.abs(back.jacobi.offdiag - jac.offdiag).max() <= 1e-9
    assert back.c == pytest.approx(rom.c, rel=1e-12)


def test_closed_form_rejects_inconsistent_spectrum():
    # a diagonal entry beyond 1 yields a non-positive denominator
    jac = JacobiMatrix(diag=np.array([1.5]), offdiag=np.zeros(0))
    with pytest.raises(ArithmeticError, match="index 1"):
        gammas_from_jacobi(JacobiROM(jacobi=jac, c=1.0), tau=0.1)


# ---------------------------------------------------------------------------
# GammaSet container
# ---------------------------------------------------------------------------


def test_gamma_set_validation():
    with pytest.raises(ValueError, match="positive"):
        GammaSet(ghat=np.array([1.0, -1.0]), g=np.ones(2), source="data")
    with pytest.raises(ValueError, match="source"):
        GammaSet(ghat=np.ones(2), g=np.ones(2), source="measured")
    with pytest.raises(ValueError, match="equal"):
        GammaSet(ghat=np.ones(2), g=np.ones(3), source="data")


def test_gamma_set_csv_round_trip(tmp_path, two_layer_pieces):
    gs = two_layer_pieces["data"]
    path = tmp_path / "gammas.csv"
    gs.to_csv(str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "j,ghat_j,g_j,source"
    assert len(lines) == 1 + gs.n
    for j, line in enumerate(lines[1:]):
        idx, ghat, g, source = line.split(",")
        assert int(idx) == j + 1
        assert float(ghat) == gs.ghat[j]  # repr round-trips exactly
        assert float(g) == gs.g[j]
        assert source == "data"
