from .model import BridgeConfig, DetrBackend
from .tensorio import write_tensor_file

__all__ = ["BridgeConfig", "DetrBackend", "write_tensor_file"]
__version__ = "0.1.0"
