"""Tests for the 1D forward simulation: grid, operator, source, snapshots,
and the boundary transfer measurement."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waverom.forward1d import (
    TransferSeries,
    VelocityModel,
    build_grid,
    discretize_operator,
    measure_transfer,
    propagate_snapshots,
    source_vector,
    synthesize_transfer,
)
from waverom.gammas import _half_step_maps


def _constant_setup(m=2000, sigma=0.01):
    v = VelocityModel.constant(1.0)
    grid = build_grid(m, v.traveltime_length())
    op = discretize_operator(grid, v)
    b = source_vector(op, sigma)
    return v, grid, op, b


@pytest.fixture(scope="module")
def constant_run():
    """One medium-resolution constant-velocity experiment shared by the
    snapshot and measurement tests."""
    v, grid, op, b = _constant_setup()
    tau, n = 0.025, 20
    snaps = propagate_snapshots(op, b, tau, 2 * n)
    f = measure_transfer(snaps, b, op.weight_primary, sigma=0.01)
    return {"v": v, "grid": grid, "op": op, "b": b, "tau": tau, "snaps": snaps, "f": f}


# ---------------------------------------------------------------------------
# velocity models
# ---------------------------------------------------------------------------


def test_model_validation():
    with pytest.raises(ValueError, match="strictly positive"):
        VelocityModel(xmax=1.0, samples=np.array([1.0, -1.0]))
    with pytest.raises(ValueError, match="xmax"):
        VelocityModel(xmax=0.0, samples=np.array([1.0, 1.0]))
    with pytest.raises(ValueError, match="role"):
        VelocityModel(xmax=1.0, samples=np.ones(2), role="background")


def test_traveltime_maps_invert_each_other():
    x = np.linspace(0.0, 1.0, 50)
    prof = 1.0 + 0.5 * np.exp(-(((np.linspace(0, 1, 801)) - 0.5) / 0.1) ** 2)
    v = VelocityModel(xmax=1.0, samples=prof)
    t = v.traveltime_of(x)
    assert np.allclose(v.position_at_traveltime(t), x, atol=1e-12)
    assert v.traveltime_length() == pytest.approx(v.traveltime_of(1.0))


def test_constant_model_traveltime():
    v = VelocityModel.constant(2.0, xmax=3.0)
    assert v.traveltime_length() == pytest.approx(1.5, rel=1e-14)
    assert v.v0 == 2.0


# ---------------------------------------------------------------------------
# staggered grid
# ---------------------------------------------------------------------------


def test_grid_four_cells():
    g = build_grid(4, 1.0)
    assert g.h == 0.25
    assert np.allclose(g.primary, [0.0, 0.25, 0.5, 0.75])
    assert np.allclose(g.dual, [0.125, 0.375, 0.625, 0.875])
    assert g.steps_dual[0] == 0.125  # first dual cell is half-width
    assert np.all(g.steps_dual[1:] == 0.25)
    assert np.all(g.steps_primary == 0.25)


def test_grid_scales_with_axis_length():
    g1 = build_grid(4, 1.0)
    g2 = build_grid(4, 2.0)
    assert np.allclose(g2.primary, 2.0 * g1.primary)
    assert np.allclose(g2.dual, 2.0 * g1.dual)


def test_grid_interleaving_large():
    g = build_grid(1000, 1.0)
    merged = np.empty(2000)
    merged[0::2] = g.primary
    merged[1::2] = g.dual
    assert np.all(np.diff(merged) > 0)
    assert g.primary[0] == 0.0
    assert g.dual[-1] < 1.0


def test_grid_rejects_tiny_m():
    with pytest.raises(ValueError, match="at least 4"):
        build_grid(3, 1.0)


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------


def test_operator_stencil_unit_velocity():
    # for v == 1 the operator's action is the standard second-difference
    # stencil: first row Neumann-reflected, last row against the Dirichlet
    # wall; the half-width first cell puts a sqrt(2) on the first entry of
    # the symmetrized off-diagonal band only
    v = VelocityModel.constant(1.0)
    g = build_grid(8, 1.0)
    op = discretize_operator(g, v)
    h = g.h
    assert np.allclose(op.sym_diag, 2.0 / h**2, rtol=1e-12)
    assert op.sym_offdiag[0] == pytest.approx(-np.sqrt(2.0) / h**2, rel=1e-12)
    assert np.allclose(op.sym_offdiag[1:], -1.0 / h**2, rtol=1e-12)
    # column view of the action: A e_j has -1/h^2 on the neighbors of an
    # interior node and 2/h^2 on the node, the boundary row scaled by the
    # half-width first cell
    e_int = np.zeros(8)
    e_int[4] = 1.0
    expected = np.zeros(8)
    expected[3] = expected[5] = -1.0 / h**2
    expected[4] = 2.0 / h**2
    assert np.allclose(op.apply(e_int), expected, atol=1e-9 / h**2)
    e_first = np.zeros(8)
    e_first[0] = 1.0
    expected0 = np.zeros(8)
    expected0[0] = 2.0 / h**2  # (v/hd_1) kappa_1 with hd_1 = h/2
    expected0[1] = -1.0 / h**2
    assert np.allclose(op.apply(e_first), expected0, atol=1e-9 / h**2)
    e_last = np.zeros(8)
    e_last[7] = 1.0
    expected_last = np.zeros(8)
    expected_last[6] = -1.0 / h**2
    expected_last[7] = 2.0 / h**2  # Dirichlet wall closes the last cell
    assert np.allclose(op.apply(e_last), expected_last, atol=1e-9 / h**2)


def test_operator_scales_quadratically_with_velocity():
    # the traveltime axis of the v==2 model on the same physical span is
    # half as long, so with the same cell count the interior entries grow 4x
    v1 = VelocityModel.constant(1.0)
    v2 = VelocityModel.constant(2.0)
    g1 = build_grid(16, v1.traveltime_length())
    g2 = build_grid(16, v2.traveltime_length())
    op1 = discretize_operator(g1, v1)
    op2 = discretize_operator(g2, v2)
    assert np.allclose(op2.sym_diag, 4.0 * op1.sym_diag, rtol=1e-12)
    assert np.allclose(op2.sym_offdiag, 4.0 * op1.sym_offdiag, rtol=1e-12)


def test_operator_self_adjoint_and_positive():
    prof = np.concatenate([np.full(400, 1.0), np.full(401, 1.5)])
    v = VelocityModel(xmax=1.0, samples=prof)
    g = build_grid(200, v.traveltime_length())
    op = discretize_operator(g, v)
    rng = np.random.default_rng(1)
    scale = float(np.abs(op.sym_diag).max())
    for _ in range(5):
        u1 = rng.standard_normal(200)
        u2 = rng.standard_normal(200)
        lhs = op.inner_primary(op.apply(u1), u2)
        rhs = op.inner_primary(u1, op.apply(u2))
        assert abs(lhs - rhs) <= 1e-12 * scale * np.linalg.norm(u1) * np.linalg.norm(u2)
    assert op.eig().values[0] > 0.0


def test_operator_is_composition_of_difference_maps():
    v = VelocityModel.constant(1.3)
    g = build_grid(50, v.traveltime_length())
    op = discretize_operator(g, v)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(50)
    assert np.allclose(op.to_primary(op.to_dual(u)), op.apply(u), rtol=1e-9, atol=1e-6)


def test_difference_maps_are_adjoint_pair():
    # <S u, w>_dual == <u, R w>_primary: the minus built into R makes the
    # pair adjoint, which is what renders A = R S nonnegative
    v = VelocityModel.constant(1.0)
    g = build_grid(64, 1.0)
    op = discretize_operator(g, v)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(64)
    w = rng.standard_normal(64)
    lhs = op.inner_dual(op.to_dual(u), w)
    rhs = op.inner_primary(u, op.to_primary(w))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_operator_axis_mismatch_message():
    v = VelocityModel.constant(2.0)  # traveltime length 0.5
    g = build_grid(16, 1.0)
    with pytest.raises(ValueError, match="build_grid"):
        discretize_operator(g, v)


def test_operator_requires_fine_model_sampling():
    v = VelocityModel(xmax=1.0, samples=np.ones(8))
    g = build_grid(16, 1.0)
    with pytest.raises(ValueError, match="at least as finely"):
        discretize_operator(g, v)


# ---------------------------------------------------------------------------
# source vector
# ---------------------------------------------------------------------------


def test_source_delta_limit():
    _, grid, op, _ = _constant_setup(m=500)
    b = source_vector(op, 1e-7)
    assert b[0] * grid.steps_dual[0] / op.v0 == pytest.approx(1.0, rel=1e-6)
    assert np.abs(b[1:]).max() < 1e-6 * b[0]


def test_source_matches_half_gaussian_kernel():
    _, grid, op, b = _constant_setup()
    sigma = 0.01
    kernel = 2.0 * np.exp(-((grid.primary / sigma) ** 2)) / (sigma * np.sqrt(np.pi))
    assert np.max(np.abs(b - kernel)) < 2e-3 * kernel.max()


def test_source_spatial_width():
    # second moment about the reflecting wall equals (sigma v / sqrt(2))^2
    _, grid, op, b = _constant_setup()
    sigma = 0.01
    w = op.weight_primary
    mass = np.sum(b * w)
    rms = np.sqrt(np.sum(grid.primary**2 * b * w) / mass)
    assert rms == pytest.approx(sigma / np.sqrt(2), rel=1e-6)


def test_source_requires_positive_sigma():
    _, _, op, _ = _constant_setup(m=500)
    with pytest.raises(ValueError, match="sigma"):
        source_vector(op, 0.0)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def test_first_snapshot_is_source(constant_run):
    snaps, b = constant_run["snaps"], constant_run["b"]
    assert np.allclose(snaps.primary[:, 0], b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_snapshot_peaks_travel_at_unit_speed(constant_run):
    # in the traveltime coordinate the pulse front moves one unit per unit
    # time, so snapshot k peaks at k tau, within one grid cell
    snaps, grid, tau = constant_run["snaps"], constant_run["grid"], constant_run["tau"]
    for k in (4, 10, 20, 30):
        peak = grid.primary[np.argmax(snaps.primary[:, k])]
        assert abs(peak - k * tau) <= grid.h + 1e-15


def test_snapshots_satisfy_three_term_identity(constant_run):
    # u_{k+1} = 2 P u_k - u_{k-1} with P the one-step propagator
    op, snaps, tau = constant_run["op"], constant_run["snaps"], constant_run["tau"]
    scale = np.abs(snaps.primary).max()

    def prop(u):
        return op.apply_function(lambda lam: np.cos(tau * np.sqrt(np.maximum(lam, 0.0))), u)

    worst = 0.0
    for k in range(1, snaps.count - 1):
        resid = snaps.primary[:, k + 1] - (2.0 * prop(snaps.primary[:, k]) - snaps.primary[:, k - 1])
        worst = max(worst, float(np.abs(resid).max()))
    assert worst <= 1e-9 * scale


def test_snapshot_second_difference_is_discrete_wave_equation(constant_run):
    # (u_{k+1} - 2 u_k + u_{k-1}) / tau^2 equals the spectral image of the
    # operator under xi(x) = -(2/tau^2)(1 - x) applied to u_k
    op, snaps, tau = constant_run["op"], constant_run["snaps"], constant_run["tau"]
    scale = np.abs(snaps.primary).max()
    k = 7
    second = (snaps.primary[:, k + 1] - 2.0 * snaps.primary[:, k] + snaps.primary[:, k - 1]) / tau**2
    image = op.apply_function(
        lambda lam: -(2.0 / tau**2) * (1.0 - np.cos(tau * np.sqrt(np.maximum(lam, 0.0)))),
        snaps.primary[:, k],
    )
    assert np.max(np.abs(second - image)) <= 1e-9 * scale / tau**2


def test_staggered_leapfrog_identity(constant_run):
    # the primary/dual snapshot pair satisfies the exact staggered update:
    #   (u_{k+1} - u_k)/tau = -Fp w_k,   (w_k - w_{k-1})/tau = Fd u_k
    # with (Fd, Fp) the half-step flux maps
    op, snaps, tau = constant_run["op"], constant_run["snaps"], constant_run["tau"]
    to_dual_flux, to_primary_flux = _half_step_maps(op, tau)
    scale = max(np.abs(snaps.primary).max(), np.abs(snaps.dual).max())
    worst = 0.0
    for k in range(snaps.count - 1):
        resid = (snaps.primary[:, k + 1] - snaps.primary[:, k]) / tau + to_primary_flux(
            snaps.dual[:, k]
        )
        worst = max(worst, float(np.abs(resid).max()))
    for k in range(1, snaps.count):
        resid = (snaps.dual[:, k] - snaps.dual[:, k - 1]) / tau - to_dual_flux(
            snaps.primary[:, k]
        )
        worst = max(worst, float(np.abs(resid).max()))
    assert worst <= 1e-8 * scale


def test_propagate_validates_arguments():
    _, _, op, b = _constant_setup(m=500)
    with pytest.raises(ValueError, match="tau"):
        propagate_snapshots(op, b, 0.0, 4)
    with pytest.raises(ValueError, match="count"):
        propagate_snapshots(op, b, 0.1, 0)


# ---------------------------------------------------------------------------
# transfer measurement
# ---------------------------------------------------------------------------


def test_zeroth_sample_is_source_energy(constant_run):
    op, b, f = constant_run["op"], constant_run["b"], constant_run["f"]
    assert f.values[0] == pytest.approx(op.inner_primary(b, b), rel=1e-14)
    assert f.values[0] > 0.0


def test_zeroth_sample_continuum_value(constant_run):
    sigma = 0.01
    assert constant_run["f"].values[0] == pytest.approx(np.sqrt(2.0 / np.pi) / sigma, rel=1e-3)


def test_transfer_is_gaussian_autocorrelation(constant_run):
    # before the first reflection the constant-medium response is the
    # autocorrelation of the pulse: f(t) = f(0) exp(-t^2 / (2 sigma^2))
    f, tau = constant_run["f"], constant_run["tau"]
    sigma = 0.01
    k = np.arange(len(f))
    predicted = f.values[0] * np.exp(-((k * tau) ** 2) / (2.0 * sigma**2))
    mask = k * tau < 0.5  # stay clear of the reflected arrival
    assert np.max(np.abs(f.values[mask] - predicted[mask])) <= 1e-3 * f.values[0]


def test_transfer_even_in_time(constant_run):
    # the response extends evenly through t = 0: the k-th sample equals the
    # inner product with cos evaluated at -k tau
    op, b, tau = constant_run["op"], constant_run["b"], constant_run["tau"]
    for k in (1, 3, 6):
        back = op.apply_function(
            lambda lam: np.cos(-k * tau * np.sqrt(np.maximum(lam, 0.0))), b
        )
        fwd = op.apply_function(
            lambda lam: np.cos(k * tau * np.sqrt(np.maximum(lam, 0.0))), b
        )
        assert op.inner_primary(b, back) == pytest.approx(op.inner_primary(b, fwd), rel=1e-14)


def test_transfer_refines_second_order():
    # halving the grid step shrinks the transfer error ~4x
    v = VelocityModel.constant(1.0)
    tau, sigma, n = 0.025, 0.01, 20
    vals = {}
    for m in (500, 1000, 2000):
        run = synthesize_transfer(v, sigma, tau, n, m=m)
        vals[m] = run.series.values
    d_coarse = np.max(np.abs(vals[500] - vals[1000]))
    d_fine = np.max(np.abs(vals[1000] - vals[2000]))
    assert 3.0 < d_coarse / d_fine < 5.0


def test_synthesize_two_layer_reflection_arrives_on_time():
    # the echo from an interface at traveltime depth T shows up in the
    # transfer series at t ~= 2T
    prof = np.where(np.linspace(0, 1, 2001) < 0.4, 1.0, 1.5)
    v = VelocityModel(xmax=1.0, samples=prof)
    depth_tt = v.traveltime_of(0.4)
    tau = 0.025
    run = synthesize_transfer(v, 0.01, tau, 30, m=1500)
    vals = run.series.values
    k = np.arange(len(vals))
    # the quiet stretch after the direct pulse dies and before the echo
    quiet = vals[(k * tau > 0.2) & (k * tau < 2 * depth_tt - 0.1)]
    echo_region = vals[np.abs(k * tau - 2 * depth_tt) < 0.1]
    assert np.abs(echo_region).max() > 20.0 * np.abs(quiet).max()


# ---------------------------------------------------------------------------
# TransferSeries container + CSV
# ---------------------------------------------------------------------------


def test_series_requires_even_count():
    with pytest.raises(ValueError, match="even"):
        TransferSeries(tau=0.1, sigma=0.01, values=np.ones(5))


def test_series_csv_round_trip(tmp_path):
    f = TransferSeries(tau=0.025, sigma=0.01, values=np.linspace(3.0, -1.0, 8))
    path = str(tmp_path / "data.csv")
    f.to_csv(path, provenance={"model": "constant", "m": "500"})
    loaded = TransferSeries.from_csv(path)
    assert loaded.series.tau == f.tau
    assert loaded.series.sigma == f.sigma
    assert np.array_equal(loaded.series.values, f.values)
    assert loaded.provenance["model"] == "constant"
    assert loaded.provenance["m"] == "500"


def test_series_csv_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.1,0.01,3\n1.0\n2.0\n")
    with pytest.raises(ValueError, match="promises"):
        TransferSeries.from_csv(str(path))


@settings(max_examples=15, deadline=None)
@given(
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=1e-4, max_value=1.0),
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_series_text_round_trip_exact(tau, sigma, n, seed):
    rng = np.random.default_rng(seed)
    f = TransferSeries(tau=tau, sigma=sigma, values=rng.standard_normal(2 * n))
    loaded = TransferSeries.loads(f.dumps())
    # repr-based serialization is exact for doubles
    assert loaded.series.tau == tau
    assert loaded.series.sigma == sigma
    assert np.array_equal(loaded.series.values, f.values)
