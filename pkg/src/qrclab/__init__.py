"""Desk-scale quantum reservoir computing: concentration and symmetry sectors."""
from .errors import InvalidArgument, InvariantError, NumericalError, QrcError, SizeError
from .qla import RngStream

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "RngStream",
    "QrcError",
    "InvalidArgument",
    "SizeError",
    "NumericalError",
    "InvariantError",
]
