"""HTTP bridge exposing point-prompted segmentation to the detection pipeline."""

from sam_bridge.backends import RegionGrowBackend, SamBackend, load_backend
from sam_bridge.rle import decode, encode
from sam_bridge.server import BridgeServer, make_server, serve

__all__ = [
    "BridgeServer",
    "RegionGrowBackend",
    "SamBackend",
    "decode",
    "encode",
    "load_backend",
    "make_server",
    "serve",
]

__version__ = "0.1.0"
