"""Simulation kernels: geometry tables, run plans, and two backends.

The compiled backend (Cython) and the pure-Python reference backend
implement the same three kernels draw for draw; outputs are bit-identical.
The compiled one is used when its extension module imported cleanly, unless
``IPSLAB_FORCE_REFERENCE=1`` is set.  ``backend_name()`` reports which one
is active; the per-call ``backend=`` override exists for the equivalence
tests and the backend benchmark.
"""

from __future__ import annotations

import os

from . import reference, tables
from .tables import (
    EnvWalkPlan,
    ForwardPlan,
    SetWalkPlan,
    decode_record_key,
    make_env_walk_plan,
    make_forward_plan,
    make_set_walk_plan,
)

try:
    from . import _compiled
except ImportError:
    _compiled = None

_FORCE_REFERENCE = os.environ.get("IPSLAB_FORCE_REFERENCE", "") == "1"


def backend_name() -> str:
    if _compiled is not None and not _FORCE_REFERENCE:
        return "compiled"
    return "reference"


def _module(backend: str | None):
    if backend is None:
        backend = backend_name()
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("the compiled kernel backend is not available")
        return _compiled
    if backend == "reference":
        return reference
    raise ValueError(f"unknown kernel backend {backend!r}")


def run_forward(plan: ForwardPlan, replica: int, backend: str | None = None) -> dict:
    out = _module(backend).run_forward(plan, replica)
    _raise_on_error(out)
    return out


def run_set_walkers(plan: SetWalkPlan, replica: int, backend: str | None = None) -> dict:
    out = _module(backend).run_set_walkers(plan, replica)
    _raise_on_error(out)
    return out


def run_env_walkers(plan: EnvWalkPlan, replica: int, backend: str | None = None) -> dict:
    out = _module(backend).run_env_walkers(plan, replica)
    _raise_on_error(out)
    return out


class KernelRunError(RuntimeError):
    """A kernel run hit a hard resource limit and stopped early."""


_ERROR_TEXT = {
    1: "event budget exhausted before the horizon",
    2: "walker coordinate left the packable range",
}


def _raise_on_error(out: dict) -> None:
    err = out.get("error", 0)
    if err:
        raise KernelRunError(_ERROR_TEXT.get(err, f"kernel error code {err}"))


__all__ = [
    "EnvWalkPlan",
    "ForwardPlan",
    "SetWalkPlan",
    "KernelRunError",
    "backend_name",
    "decode_record_key",
    "make_env_walk_plan",
    "make_forward_plan",
    "make_set_walk_plan",
    "run_forward",
    "run_set_walkers",
    "run_env_walkers",
    "tables",
]
