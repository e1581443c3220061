"""Direct wave-speed estimation from boundary transfer data.

The package turns equally-spaced samples of an acoustic transfer function
into a reduced-order model that *exactly* interpolates the data, reads the
model's continued-fraction coefficients, and converts coefficient ratios
against a known reference medium into pointwise velocity estimates on a
weakly medium-dependent grid -- no iterative data fitting anywhere.
"""

from .forward1d import (
    StaggeredGrid,
    TransferSeries,
    VelocityModel,
    build_grid,
    discretize_operator,
    measure_transfer,
    propagate_snapshots,
    source_vector,
    synthesize_transfer,
)
from .gammas import (
    GammaSet,
    gammas_from_jacobi,
    gammas_from_measure,
    gram_schmidt_check,
    jacobi_from_gammas,
    orthogonalize_reference,
)
from .invert1d import InversionResult, TravelTimeGrid, invert, reconstruct, reference_grid, to_physical
from .models import FIELD_NAMES, MODEL_NAMES, make_field, make_model
from .mimo2d import (
    BlockGammaSet,
    BlockROM,
    BlockTransferSeries,
    VelocityField2D,
    block_gammas,
    block_gram,
    block_lanczos,
    block_measure,
    forward2d,
    invert2d,
)
from .romdata import GramPair, JacobiROM, SpectralMeasure, assemble_gram, cholesky_rom, lanczos_jacobi, rom_transfer, spectral_measure

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model catalog
    "MODEL_NAMES",
    "FIELD_NAMES",
    "make_model",
    "make_field",
    # forward modeling
    "VelocityModel",
    "StaggeredGrid",
    "TransferSeries",
    "build_grid",
    "discretize_operator",
    "source_vector",
    "propagate_snapshots",
    "measure_transfer",
    "synthesize_transfer",
    # data-driven reduced model
    "GramPair",
    "SpectralMeasure",
    "JacobiROM",
    "assemble_gram",
    "spectral_measure",
    "lanczos_jacobi",
    "cholesky_rom",
    "rom_transfer",
    # continued-fraction coefficients
    "GammaSet",
    "gammas_from_measure",
    "gammas_from_jacobi",
    "jacobi_from_gammas",
    "orthogonalize_reference",
    "gram_schmidt_check",
    # 1D inversion
    "TravelTimeGrid",
    "InversionResult",
    "reference_grid",
    "reconstruct",
    "to_physical",
    "invert",
    # 2D extension
    "VelocityField2D",
    "BlockTransferSeries",
    "BlockROM",
    "BlockGammaSet",
    "forward2d",
    "block_gram",
    "block_measure",
    "block_lanczos",
    "block_gammas",
    "invert2d",
]
