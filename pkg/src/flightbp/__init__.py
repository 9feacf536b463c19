"""Back-propagation network for predicting aviation accident severity."""

from flightbp.errors import FlightBPError
from flightbp.nn_core import (
    ActivationKind,
    ForwardTrace,
    LayerParams,
    NetworkParams,
    init_network,
    network_forward,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "FlightBPError",
    "ForwardTrace",
    "LayerParams",
    "NetworkParams",
    "init_network",
    "network_forward",
]
