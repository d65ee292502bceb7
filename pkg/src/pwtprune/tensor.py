"""Array conventions shared by every kernel.

Tensors are plain C-contiguous numpy arrays; one floating dtype per run.
"""
import numpy as np

PRECISIONS = {"float32": np.float32, "float64": np.float64}


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def resolve_dtype(precision):
    if isinstance(precision, str):
        try:
            return np.dtype(PRECISIONS[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}; expected float32 or float64") from None
    dtype = np.dtype(precision)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    return dtype


def check_finite(arr, what):
    """Raise NonFiniteError if ``arr`` holds NaN or Inf."""
    if not np.isfinite(arr).all():
        bad = int(arr.size - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{what}: {bad} non-finite value(s)")
    return arr
