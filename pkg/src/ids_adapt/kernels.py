"""Backend selection for the inference and sampling kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``IDS_ADAPT_BACKEND=python`` to force the fallback
(``compiled`` makes a missing extension an import error).
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

BACKENDS = ("compiled", "python")
_MODULES = {"compiled": "ids_adapt._ckernels", "python": "ids_adapt._pykernels"}


def load_backend(name: str) -> ModuleType:
    if name not in _MODULES:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(_MODULES[name])


def available_backends() -> list[str]:
    names = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select() -> tuple[str, ModuleType]:
    requested = os.environ.get("IDS_ADAPT_BACKEND", "auto").strip().lower()
    if requested in ("", "auto"):
        try:
            return "compiled", load_backend("compiled")
        except ImportError:
            return "python", load_backend("python")
    return requested, load_backend(requested)


BACKEND, _impl = _select()

dense_forward = _impl.dense_forward
weighted_draws = _impl.weighted_draws
