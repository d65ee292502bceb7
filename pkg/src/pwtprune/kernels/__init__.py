"""Convolution kernel backends.

The compiled extension is used when it was built; otherwise the numpy
fallback is selected. ``PWTPRUNE_KERNELS=python`` (or ``extension``) forces
the choice at import time.
"""
import importlib
import os

_BACKENDS = {"extension": "pwtprune.kernels._conv", "python": "pwtprune.kernels._reference"}


def load_backend(name):
    """Import a backend module by name ('extension' or 'python')."""
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {sorted(_BACKENDS)}")
    return importlib.import_module(_BACKENDS[name])


def available_backends():
    names = []
    for name in _BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    forced = os.environ.get("PWTPRUNE_KERNELS")
    if forced:
        return forced, load_backend(forced)
    try:
        return "extension", load_backend("extension")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

conv_forward = _impl.conv_forward
conv_backward_weight = _impl.conv_backward_weight
conv_backward_input = _impl.conv_backward_input
