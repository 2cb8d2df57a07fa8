"""Element type helpers. All plan data is 4-byte i32 or f32."""

from __future__ import annotations

import numpy as np

ELEM_SIZE = 4
NP_DTYPES = {"i32": np.dtype("<i4"), "f32": np.dtype("<f4")}


def as_elems(raw: np.ndarray, dtype: str) -> np.ndarray:
    """View a uint8 byte array as elements of the given dtype."""
    return raw.view(NP_DTYPES[dtype])


def to_bytes(values, dtype: str) -> np.ndarray:
    return np.asarray(values, NP_DTYPES[dtype]).view(np.uint8)
