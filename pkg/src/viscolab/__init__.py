"""Free-energy diagnostics for Oldroyd-B and FENE-P conformation dynamics.

Submodules load on first attribute access so that ``viscolab.cli`` can set
numba's thread limit before any compiled kernel is imported.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "tensor_core", "models", "homogeneous", "channel", "micro_macro", "diagnostics", "config", "runner", "cli",
    "kernels", "errors", "io",
)

_EXPORTS = {
    "ConfTensor": "tensor_core",
    "ModelKind": "models",
    "ModelParams": "models",
    "VelocityGradient": "models",
    "HomogeneousScenario": "homogeneous",
    "Trajectory": "homogeneous",
    "ChannelConfig": "channel",
    "ChannelState": "channel",
    "Ensemble": "micro_macro",
    "EnergySeries": "diagnostics",
    "RunConfig": "config",
    "parse_config": "config",
}

__all__ = ["__version__", *_SUBMODULES, *_EXPORTS]


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module 'viscolab' has no attribute {name!r}")
