"""Writer for the VICROPAT1 attention tensor file format.

line 1: magic "VICROPAT1"
line 2: one-line JSON header {"L","Nh","Nq","Nk","Hk","Wk"}
then L*Nh*Nq*Nk little-endian float32, row-major [l,h,q,i].
"""
import json

import numpy as np

MAGIC = b"VICROPAT1"


def write_tensor_file(path, values: np.ndarray, key_grid) -> None:
    if values.ndim != 4:
        raise ValueError(f"attention tensor must be 4-D, got {values.shape}")
    l, nh, nq, nk = values.shape
    hk, wk = key_grid
    if hk * wk != nk:
        raise ValueError(f"key grid {key_grid} inconsistent with Nk={nk}")
    header = {"L": l, "Nh": nh, "Nq": nq, "Nk": nk, "Hk": hk, "Wk": wk}
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n")
        f.write(json.dumps(header).encode("ascii") + b"\n")
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
