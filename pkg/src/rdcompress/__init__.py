"""Importance-weighted compression of small dense networks.

Numerical kernels run under numba when it is installed; set
``RDCOMPRESS_NO_NUMBA=1`` before import to force the pure-numpy path.
"""

__version__ = "0.1.0"

from ._accel import HAVE_NUMBA, backend
from .compress import (
    Codebook,
    PruneMask,
    apply_codebook,
    code_bits,
    cubic_real_root,
    prune,
    quantization_compression_ratio,
    quartic_weighted_kmeans,
    weighted_kmeans,
)
from .errors import DomainError, NumericError, RDCompressError, ShapeError
from .importance import ImportanceDiag
from .importance import compute as compute_importance
from .net import Dataset, DenseLayer, Network
from .rd_linear import LinearSource, rd_curve, scalar_gaussian_rd, waterfill
from .relu_oracle import analytic_relu_mse, hermite_coeffs
