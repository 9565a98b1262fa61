"""Kernel backend selection: compiled extension when available, else pure Python."""

from __future__ import annotations

from typing import Callable, NamedTuple

from . import _kernels_py

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None


class Backend(NamedTuple):
    name: str
    dense_step: Callable
    neighbor_step: Callable


_PYTHON = Backend("python", _kernels_py.dense_step, _kernels_py.neighbor_step)
_BACKENDS = {"python": _PYTHON}
if _compiled is not None:
    _BACKENDS["compiled"] = Backend(
        "compiled", _compiled.dense_step, _compiled.neighbor_step
    )


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None) -> Backend:
    """Resolve a backend by name; None picks compiled when built, else python."""
    if name is None:
        name = "compiled" if "compiled" in _BACKENDS else "python"
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        ) from None
