"""Command-line harness for the pipeline.

Subcommands
-----------
synthesize   generate transfer data for a built-in or file model (1D or 2D)
invert       run the 1D inversion on a data CSV
tau-sweep    tabulate conditioning / interpolation / reconstruction vs tau
plot-data    emit plot-ready CSV panels from a finished experiment
invert2d     run the 2D block inversion on a block-series directory

All flags are long-form.  A ``--config`` file holds ``key=value`` lines
(``#`` comments allowed) using the same names as the flags; explicit flags
override the file.  Exit codes: 0 success, 2 validation error, 3 numerical
breakdown, 4 I/O error.  Outputs are deterministic: the same configuration
and inputs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import models
from .forward1d import TransferSeries, VelocityModel, build_grid, discretize_operator, propagate_snapshots, source_vector, synthesize_transfer
from .gammas import orthogonalize_reference
from .invert1d import TAU_GUIDANCE, InversionResult, invert, read_result_csv, reference_grid
from .mimo2d import VelocityField2D, forward2d, invert2d, read_block_series, write_block_series
from .romdata import assemble_gram, cholesky_rom, rom_transfer, spectral_measure

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters shared by the subcommands."""

    model: str
    sigma: float
    tau_over_sigma: float
    n: int
    m: int
    mode: str
    output: str

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.tau_over_sigma > 0:
            raise ValueError(f"tau-over-sigma must be positive, got {self.tau_over_sigma}")
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.m < 4:
            raise ValueError(f"m must be at least 4, got {self.m}")
        if self.mode not in ("1d", "2d"):
            raise ValueError(f"mode must be '1d' or '2d', got {self.mode!r}")

    @property
    def tau(self):
        return self.tau_over_sigma * self.sigma


def _read_config_file(path):
    """Parse a key=value config file with # comments."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise OSError(f"cannot read config file {path!r}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            out[key.strip().replace("_", "-")] = value.strip()
    return out


def _apply_config(args, parser_defaults):
    """Fill argparse results from the config file where flags were omitted."""
    if not getattr(args, "config", None):
        return
    file_values = _read_config_file(args.config)
    for key, raw in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"config key {key!r} is not a recognized option")
        if getattr(args, attr) is None or getattr(args, attr) == parser_defaults.get(attr):
            caster = type(parser_defaults[attr]) if parser_defaults.get(attr) is not None else str
            if caster is bool:
                setattr(args, attr, raw.lower() in ("1", "true", "yes"))
            else:
                setattr(args, attr, caster(raw))


def _require(args, names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise ValueError(f"missing required option --{name} (flag or config file)")


def _resolve_model(spec_string, role="true"):
    """Built-in name or two-column file path."""
    if spec_string in models.MODEL_NAMES:
        return models.make_model(spec_string, role=role)
    if os.path.exists(spec_string):
        return models.load_model(spec_string, role=role)
    raise ValueError(
        f"model {spec_string!r} is neither a built-in ({', '.join(sorted(models.MODEL_NAMES))}) "
        "nor an existing file"
    )


def _resolve_field(spec_string, xmax, ymax):
    if spec_string in models.FIELD_NAMES:
        return models.make_field(spec_string, xmax=xmax, ymax=ymax)
    if os.path.exists(spec_string):
        return VelocityField2D.from_file(spec_string)
    raise ValueError(
        f"2D field {spec_string!r} is neither a built-in ({', '.join(sorted(models.FIELD_NAMES))}) "
        "nor an existing file"
    )


def _model_hash(samples):
    return hashlib.sha256(np.ascontiguousarray(samples, dtype=float).tobytes()).hexdigest()


def _warn_window(tau, n, round_trip):
    window = (2 * n - 1) * tau
    if window > round_trip:
        print(
            f"warning: recording window (2n-1)*tau = {window:.6g} exceeds the "
            f"round-trip traveltime {round_trip:.6g}; late samples carry "
            "reflected energy and node positions may degrade. Reduce n or tau.",
            file=sys.stderr,
        )


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def cmd_synthesize(args):
    cfg = ExperimentConfig(
        model=args.model,
        sigma=args.sigma,
        tau_over_sigma=args.tau_over_sigma,
        n=args.n,
        m=args.m,
        mode=args.mode,
        output=args.output,
    )
    os.makedirs(cfg.output, exist_ok=True)
    if cfg.mode == "1d":
        model = _resolve_model(cfg.model, role="true")
        _warn_window(cfg.tau, cfg.n, 2.0 * model.traveltime_length())
        run = synthesize_transfer(model, cfg.sigma, cfg.tau, cfg.n, m=cfg.m)
        out_path = os.path.join(cfg.output, "data.csv")
        run.series.to_csv(
            out_path,
            provenance={
                "model": cfg.model,
                "model_sha256": _model_hash(model.samples),
                "xmax": repr(model.xmax),
                "m": str(cfg.m),
            },
        )
        print(f"wrote {out_path} ({2 * cfg.n} samples, f_0 = {run.series.values[0]:.6g})")
        return EXIT_OK

    # 2d
    _require(args, ["sources"])
    field = _resolve_field(cfg.model, xmax=args.xmax, ymax=args.ymax)
    sources_y = np.array([float(tok) for tok in args.sources.split(",") if tok])
    fs = forward2d(
        field, sources_y, cfg.sigma, cfg.tau, cfg.n, nx=args.nx, ny=args.ny
    )
    out_dir = os.path.join(cfg.output, "blocks")
    manifest = write_block_series(
        out_dir,
        fs,
        provenance={
            "field": cfg.model,
            "field_sha256": _model_hash(field.values),
            "xmax": repr(field.xmax),
            "ymax": repr(field.ymax),
            "nx": str(args.nx),
            "ny": str(args.ny),
        },
    )
    print(f"wrote {manifest} ({2 * cfg.n} blocks of size {fs.m}x{fs.m})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invert
# ---------------------------------------------------------------------------


def _resolve_data_csv(path):
    """Accept either the transfer-data CSV itself or the directory holding it."""
    if os.path.isdir(path):
        candidate = os.path.join(path, "data.csv")
        if os.path.exists(candidate):
            return candidate
        raise OSError(
            f"no experiment found under {path!r}: expected data.csv "
            "(run 'waverom synthesize' first)"
        )
    if not os.path.exists(path):
        raise OSError(
            f"no transfer data at {path!r} (run 'waverom synthesize' first)"
        )
    return path


def cmd_invert(args):
    _require(args, ["data"])
    loaded = TransferSeries.from_csv(_resolve_data_csv(args.data))
    series = loaded.series
    xmax = args.xmax
    if xmax is None:
        if "xmax" in loaded.provenance:
            xmax = float(loaded.provenance["xmax"])
        else:
            raise ValueError(
                "missing required option --xmax (the data file carries no xmax provenance)"
            )
    v0_model = VelocityModel.constant(args.v0, xmax=xmax, role="reference")
    _warn_window(series.tau, args.n or series.n, 2.0 * v0_model.traveltime_length())
    os.makedirs(args.output, exist_ok=True)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = invert(series, v0_model, m=args.m, n=args.n)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out_path = os.path.join(args.output, "result.csv")
    result.to_csv(out_path)
    result.write_sidecar(os.path.join(args.output, "result_diagnostics.txt"), v0=repr(args.v0), xmax=repr(xmax))
    diag = result.diagnostics
    print(f"wrote {out_path}")
    print(
        f"cond(U*U) = {diag['cond_uu']:.6g}, monotone grid: {diag['monotone']}, "
        f"n = {diag['n']}, tau = {diag['tau']:.6g}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# tau-sweep
# ---------------------------------------------------------------------------


def _sweep_entry(model, sigma, tau, n, m):
    """One isolated pipeline run; returns a result row dict."""
    row = {"tau": tau, "cond_uu": float("nan"), "interp_residual": float("nan"),
           "monotone": "", "recon_error": float("nan"), "status": "ok"}
    try:
        run = synthesize_transfer(model, sigma, tau, n, m=m)
        series = run.series
        gram = assemble_gram(series)
        row["cond_uu"] = gram.cond_uu
        meas = spectral_measure(gram)
        rom = cholesky_rom(gram)
        fitted = rom_transfer(rom, 2 * n)
        row["interp_residual"] = float(
            np.abs(fitted - series.values).max() / abs(series.values[0])
        )
        v0_model = VelocityModel.constant(
            model.v0, xmax=model.traveltime_length() * model.v0, role="reference"
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = invert(series, v0_model, m=m)
        row["monotone"] = str(bool(result.diagnostics["monotone"]))
        # compare estimates against the truth at the estimated positions
        est = np.concatenate([result.estimates_primary, result.estimates_dual])
        pos = np.concatenate([result.physical_primary, result.physical_dual])
        truth = model.value_at(np.clip(pos, 0.0, model.xmax))
        row["recon_error"] = float(np.abs(est - truth).max() / truth.max())
        del meas
    except (ValueError, ArithmeticError) as exc:
        row["status"] = f"failed: {exc}"
    return row


def cmd_tau_sweep(args):
    _require(args, ["taus"])
    model = _resolve_model(args.model, role="true")
    taus = [float(tok) * args.sigma if args.taus_in_sigma else float(tok)
            for tok in args.taus.split(",") if tok]
    if not taus:
        raise ValueError("--taus must list at least one value")
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(
            pool.map(lambda t: _sweep_entry(model, args.sigma, t, args.n, args.m), taus)
        )
    header = ("tau", "cond_uu", "interp_residual", "monotone", "recon_error", "status")
    print("  ".join(f"{h:>16s}" for h in header))
    for row in rows:
        print(
            f"{row['tau']:>16.8g}  {row['cond_uu']:>16.6g}  "
            f"{row['interp_residual']:>16.6g}  {row['monotone']:>16s}  "
            f"{row['recon_error']:>16.6g}  {row['status']}"
        )
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        out_path = os.path.join(args.output, "sweep.csv")
        with open(out_path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(
                    f"{float(row['tau'])!r},{float(row['cond_uu'])!r},"
                    f"{float(row['interp_residual'])!r},{row['monotone']},"
                    f"{float(row['recon_error'])!r},{row['status']}\n"
                )
        print(f"wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot-data
# ---------------------------------------------------------------------------


def _write_matrix_csv(path, matrix):
    with open(path, "w") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def cmd_plot_data(args):
    results = args.results
    data_path = os.path.join(results, "data.csv")
    result_path = os.path.join(results, "result.csv")
    if not os.path.exists(data_path):
        raise OSError(
            f"no experiment found under {results!r}: expected data.csv "
            "(run 'waverom synthesize' and 'waverom invert' first)"
        )
    loaded = TransferSeries.from_csv(data_path)
    series = loaded.series
    out = args.output or results
    os.makedirs(out, exist_ok=True)

    xmax = float(loaded.provenance.get("xmax", "1.0"))
    v0_model = VelocityModel.constant(args.v0, xmax=xmax, role="reference")
    grid = build_grid(args.m, v0_model.traveltime_length())
    op0 = discretize_operator(grid, v0_model)
    b0 = source_vector(op0, series.sigma)
    snaps = propagate_snapshots(op0, b0, series.tau, series.n)
    _write_matrix_csv(os.path.join(out, "panel_snapshots.csv"), snaps.primary)
    ortho0 = orthogonalize_reference(op0, b0, series.tau, series.n)
    _write_matrix_csv(os.path.join(out, "panel_ortho_snapshots.csv"), ortho0.primary)
    nodes0 = reference_grid(ortho0, v0_model)
    written = ["panel_snapshots.csv", "panel_ortho_snapshots.csv"]

    if os.path.exists(result_path):
        rows = read_result_csv(result_path)
        with open(os.path.join(out, "panel_nodes.csv"), "w") as fh:
            fh.write("node_type,traveltime_pos,physical_pos,v_estimate\n")
            for kind in ("primary", "dual"):
                for tt, xx, vv in zip(
                    rows[f"{kind}_traveltime_pos"],
                    rows[f"{kind}_physical_pos"],
                    rows[f"{kind}_v_estimate"],
                ):
                    fh.write(f"{kind},{float(tt)!r},{float(xx)!r},{float(vv)!r}\n")
        written.append("panel_nodes.csv")

        # centers-of-mass panel: reference and approximated-physical series,
        # plus the true series when the true model is available
        true_primary = true_dual = None
        if args.model:
            model = _resolve_model(args.model, role="true")
            grid_t = build_grid(args.m, model.traveltime_length())
            op_t = discretize_operator(grid_t, model)
            b_t = source_vector(op_t, series.sigma)
            ortho_t = orthogonalize_reference(op_t, b_t, series.tau, series.n)
            model_ref = VelocityModel(xmax=model.xmax, samples=model.samples, role="reference")
            nodes_t = reference_grid(ortho_t, model_ref)
            true_primary = model.position_at_traveltime(nodes_t.primary)
            true_dual = model.position_at_traveltime(nodes_t.dual)
        ref_primary = v0_model.position_at_traveltime(nodes0.primary)
        ref_dual = v0_model.position_at_traveltime(nodes0.dual)
        approx_primary = rows["primary_physical_pos"]
        approx_dual = rows["dual_physical_pos"]
        com_path = os.path.join(out, "panel_centers_of_mass.csv")
        with open(com_path, "w") as fh:
            cols = "node_index,node_type,reference,approx_physical"
            fh.write(cols + (",true\n" if true_primary is not None else "\n"))
            for j in range(series.n):
                for kind, ref, approx, true in (
                    ("primary", ref_primary, approx_primary, true_primary),
                    ("dual", ref_dual, approx_dual, true_dual),
                ):
                    line = f"{j + 1},{kind},{float(ref[j])!r},{float(approx[j])!r}"
                    if true is not None:
                        line += f",{float(true[j])!r}"
                    fh.write(line + "\n")
        written.append("panel_centers_of_mass.csv")

    for name in written:
        print(f"wrote {os.path.join(out, name)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invert2d
# ---------------------------------------------------------------------------


def _resolve_block_dir(path):
    """Accept the block directory or the parent experiment directory."""
    if os.path.exists(os.path.join(path, "manifest.csv")):
        return path
    nested = os.path.join(path, "blocks")
    if os.path.exists(os.path.join(nested, "manifest.csv")):
        return nested
    raise OSError(
        f"no block series found under {path!r}: expected manifest.csv "
        "(run 'waverom synthesize --mode 2d' first)"
    )


def cmd_invert2d(args):
    _require(args, ["data"])
    data_dir = _resolve_block_dir(args.data)
    fs = read_block_series(data_dir)
    meta = {}
    with open(os.path.join(data_dir, "manifest.csv")) as fh:
        for line in fh:
            if line.startswith("#") and "=" in line:
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
    xmax = args.xmax if args.xmax is not None else float(meta.get("xmax", "nan"))
    ymax = args.ymax if args.ymax is not None else float(meta.get("ymax", "nan"))
    if not np.isfinite(xmax) or not np.isfinite(ymax):
        raise ValueError(
            "missing required option --xmax/--ymax (block manifest carries no geometry)"
        )
    nx = args.nx if args.nx is not None else int(meta.get("nx", "200"))
    ny = args.ny if args.ny is not None else int(meta.get("ny", "120"))
    result = invert2d(fs, args.v0, xmax=xmax, ymax=ymax, nx=nx, ny=ny, m_ref=args.m, n=args.n)
    os.makedirs(args.output, exist_ok=True)
    out_path = os.path.join(args.output, "result2d.csv")
    result.to_csv(out_path)
    diag = result.diagnostics
    print(f"wrote {out_path}")
    print(
        f"cond(U*U) = {diag['cond_uu']:.6g} (data), {diag['ref_cond_uu']:.6g} (reference), "
        f"{result.m} lines x {result.n} nodes"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waverom",
        description="Direct wave-speed estimation from boundary transfer data "
        "via reduced-order models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")

    p_syn = sub.add_parser("synthesize", help="generate transfer data")
    common(p_syn)
    p_syn.add_argument("--model", default="constant", help="built-in name or model file")
    p_syn.add_argument("--sigma", type=float, default=0.01, help="pulse width")
    p_syn.add_argument("--tau-over-sigma", type=float, default=2.5, help="time step in sigma units")
    p_syn.add_argument("--n", type=int, default=25, help="reduced order (2n data samples)")
    p_syn.add_argument("--m", type=int, default=2000, help="solver grid size")
    p_syn.add_argument("--mode", default="1d", choices=("1d", "2d"))
    p_syn.add_argument("--output", default="experiment", help="output directory")
    p_syn.add_argument("--sources", help="2d only: comma list of transverse source positions")
    p_syn.add_argument("--xmax", type=float, default=1.0, help="2d built-ins: domain depth")
    p_syn.add_argument("--ymax", type=float, default=1.0, help="2d built-ins: transverse half-width")
    p_syn.add_argument("--nx", type=int, default=200, help="2d solver cells in x")
    p_syn.add_argument("--ny", type=int, default=120, help="2d solver cells in y")
    p_syn.set_defaults(func=cmd_synthesize)

    p_inv = sub.add_parser("invert", help="run the 1D inversion")
    common(p_inv)
    p_inv.add_argument(
        "--data", help="transfer data CSV from synthesize (or its directory)"
    )
    p_inv.add_argument("--v0", type=float, default=1.0, help="reference speed")
    p_inv.add_argument("--xmax", type=float, help="domain depth (default: data provenance)")
    p_inv.add_argument("--m", type=int, default=2000, help="reference solver grid size")
    p_inv.add_argument("--n", type=int, help="truncate to this order (default: all data)")
    p_inv.add_argument("--output", default="experiment", help="output directory")
    p_inv.set_defaults(func=cmd_invert)

    p_sweep = sub.add_parser("tau-sweep", help="tabulate diagnostics across tau values")
    common(p_sweep)
    p_sweep.add_argument("--model", default="two-layer", help="built-in name or model file")
    p_sweep.add_argument("--sigma", type=float, default=0.01, help="pulse width")
    p_sweep.add_argument("--taus", help="comma list of tau values (in sigma units by default)")
    p_sweep.add_argument(
        "--taus-in-sigma",
        action="store_true",
        default=True,
        help="interpret --taus as multiples of sigma (default)",
    )
    p_sweep.add_argument(
        "--taus-absolute", dest="taus_in_sigma", action="store_false",
        help="interpret --taus as absolute times",
    )
    p_sweep.add_argument("--n", type=int, default=25, help="reduced order")
    p_sweep.add_argument("--m", type=int, default=2000, help="solver grid size")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    p_sweep.add_argument("--output", help="optional directory for sweep.csv")
    p_sweep.set_defaults(func=cmd_tau_sweep)

    p_plot = sub.add_parser("plot-data", help="emit plot-ready CSV panels")
    common(p_plot)
    p_plot.add_argument("--results", default="experiment", help="experiment directory")
    p_plot.add_argument("--model", help="true model for the centers-of-mass panel")
    p_plot.add_argument("--v0", type=float, default=1.0, help="reference speed")
    p_plot.add_argument("--m", type=int, default=2000, help="reference solver grid size")
    p_plot.add_argument("--output", help="panel directory (default: results dir)")
    p_plot.set_defaults(func=cmd_plot_data)

    p_2d = sub.add_parser("invert2d", help="run the 2D block inversion")
    common(p_2d)
    p_2d.add_argument(
        "--data",
        help="block-series directory from synthesize --mode 2d (or its parent)",
    )
    p_2d.add_argument("--v0", type=float, default=1.0, help="reference speed")
    p_2d.add_argument("--xmax", type=float, help="domain depth (default: manifest)")
    p_2d.add_argument("--ymax", type=float, help="transverse half-width (default: manifest)")
    p_2d.add_argument("--nx", type=int, help="solver cells in x (default: manifest)")
    p_2d.add_argument("--ny", type=int, help="solver cells in y (default: manifest)")
    p_2d.add_argument("--m", type=int, default=2000, help="1D reference grid for node depths")
    p_2d.add_argument("--n", type=int, help="truncate to this order (default: all data)")
    p_2d.add_argument("--output", default="experiment2d", help="output directory")
    p_2d.set_defaults(func=cmd_invert2d)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {
        action.dest: action.default
        for action in parser._subparsers._group_actions[0].choices[args.command]._actions
        if action.dest != "help"
    }
    try:
        _apply_config(args, defaults)
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"error: numerical breakdown: {exc}", file=sys.stderr)
        print(TAU_GUIDANCE, file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
