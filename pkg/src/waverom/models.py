"""Built-in velocity models and model file I/O.

Small catalog used by the CLI, the demos, and the tests.  1D model files
are two-column text (position, speed), linearly interpolated; 2D fields
use the header + row-major format of :class:`waverom.mimo2d.VelocityField2D`.
"""

from __future__ import annotations

import numpy as np

from .forward1d import VelocityModel
from .mimo2d import VelocityField2D

__all__ = [
    "make_model",
    "make_field",
    "extrude_1d",
    "load_model",
    "save_model",
    "MODEL_NAMES",
    "FIELD_NAMES",
]

#: default sampling density for the synthetic catalog profiles
_CATALOG_SAMPLES = 4001


def _sampled(xmax: float, fn, role: str) -> VelocityModel:
    x = np.linspace(0.0, xmax, _CATALOG_SAMPLES)
    return VelocityModel(xmax=xmax, samples=fn(x), role=role)


def make_model(name: str, xmax: float = 1.0, role: str = "true") -> VelocityModel:
    """Build a named 1D profile on ``[0, xmax]``.

    ``constant``    v = 1 everywhere.
    ``two-layer``   1.0 up to 0.4*xmax, then 1.5 (sharp contrast).
    ``smooth-bump`` gaussian high-speed lens centered mid-domain.
    ``three-feature`` slow dip, fast bump, and a step near the far end.
    """
    if name == "constant":
        return VelocityModel.constant(1.0, xmax=xmax, role=role)
    if name == "two-layer":
        return _sampled(xmax, lambda x: np.where(x < 0.4 * xmax, 1.0, 1.5), role)
    if name == "smooth-bump":
        return _sampled(
            xmax, lambda x: 1.0 + 0.5 * np.exp(-(((x - 0.5 * xmax) / (0.1 * xmax)) ** 2)), role
        )
    if name == "three-feature":

        def profile(x: np.ndarray) -> np.ndarray:
            v = np.ones_like(x)
            v -= 0.25 * np.exp(-(((x - 0.25 * xmax) / (0.06 * xmax)) ** 2))
            v += 0.6 * np.exp(-(((x - 0.55 * xmax) / (0.07 * xmax)) ** 2))
            v = np.where(x > 0.8 * xmax, v + 0.4, v)
            return v

        return _sampled(xmax, profile, role)
    raise ValueError(f"unknown 1D model {name!r}; choose one of {sorted(MODEL_NAMES)}")


MODEL_NAMES = {"constant", "two-layer", "smooth-bump", "three-feature"}


def make_field(name: str, xmax: float = 1.0, ymax: float = 1.0) -> VelocityField2D:
    """Build a named 2D field on ``[0, xmax] x [-ymax, ymax]``.

    ``constant``  v = 1.
    ``block``     rectangular fast inclusion buried mid-domain.
    ``dipping``   interface whose depth increases linearly with y.
    """
    nx, ny = 201, 201
    x = np.linspace(0.0, xmax, nx)[:, None]
    y = np.linspace(-ymax, ymax, ny)[None, :]
    if name == "constant":
        return VelocityField2D.constant(1.0, xmax=xmax, ymax=ymax)
    if name == "block":
        vals = np.ones((nx, ny))
        inside = (
            (x >= 0.35 * xmax)
            & (x <= 0.6 * xmax)
            & (np.abs(y) <= 0.35 * ymax)
        )
        vals = np.where(inside, 1.5, vals)
        return VelocityField2D(xmax=xmax, ymax=ymax, values=vals)
    if name == "dipping":
        depth = 0.35 * xmax + 0.2 * xmax * (y + ymax) / (2 * ymax)
        vals = np.where(x < depth, 1.0, 1.4) * np.ones((nx, ny))
        return VelocityField2D(xmax=xmax, ymax=ymax, values=vals)
    raise ValueError(f"unknown 2D field {name!r}; choose one of {sorted(FIELD_NAMES)}")


FIELD_NAMES = {"constant", "block", "dipping"}


def extrude_1d(model: VelocityModel, ymax: float) -> VelocityField2D:
    """Extend a 1D profile uniformly in the transverse direction."""
    return VelocityField2D(
        xmax=model.xmax,
        ymax=ymax,
        values=np.tile(model.samples[:, None], (1, 2)),
    )


def load_model(path: str, role: str = "true", samples: int = _CATALOG_SAMPLES) -> VelocityModel:
    """Read a two-column (position, speed) text file.

    Whitespace- or comma-separated, ``#`` comments allowed; positions must
    start at 0 and increase.  The profile is resampled onto a uniform grid
    by linear interpolation.
    """
    xs, vs = [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.replace(",", " ").split()
            if len(toks) != 2:
                raise ValueError(f"model line {raw!r} must have two columns (position, speed)")
            xs.append(float(toks[0]))
            vs.append(float(toks[1]))
    x = np.array(xs)
    v = np.array(vs)
    if x.size < 2:
        raise ValueError("model file needs at least two (position, speed) rows")
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise ValueError("model positions must start at 0 and strictly increase")
    uniform = np.linspace(0.0, x[-1], samples)
    return VelocityModel(xmax=float(x[-1]), samples=np.interp(uniform, x, v), role=role)


def save_model(path: str, model: VelocityModel) -> None:
    with open(path, "w") as fh:
        fh.write("# position,speed\n")
        for xi, vi in zip(model.positions, model.samples):
            fh.write(f"{float(xi)!r},{float(vi)!r}\n")
