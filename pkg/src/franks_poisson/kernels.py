"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``FRANKS_POISSON_BACKEND=python`` is set, the numpy implementation is used.
Both expose ``field_value``, ``field_gradient``, ``vector_field``,
``rk4_integrate``, ``rk4_trajectory`` and ``rk4_section``.
"""
from __future__ import annotations

import os

from . import _kernels_py

_NAMES = ("field_value", "field_gradient", "vector_field", "rk4_integrate", "rk4_trajectory", "rk4_section")


def _load(name: str):
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # noqa: F401  (ImportError propagates)

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _default():
    choice = os.environ.get("FRANKS_POISSON_BACKEND", "").strip().lower()
    if choice:
        return _load(choice)
    try:
        return _load("cython")
    except ImportError:
        return _kernels_py


_backend = _default()


def backend_name() -> str:
    return _backend.BACKEND


def get_backend(name: str | None = None):
    """Return a backend module; ``None`` gives the active one."""
    return _backend if name is None else _load(name)


def set_backend(name: str) -> None:
    global _backend
    _backend = _load(name)


def available_backends() -> list[str]:
    out = ["python"]
    try:
        _load("cython")
        out.append("cython")
    except ImportError:
        pass
    return out


def __getattr__(attr):
    if attr in _NAMES:
        return getattr(_backend, attr)
    raise AttributeError(attr)
