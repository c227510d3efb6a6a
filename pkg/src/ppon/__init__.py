"""Progressive three-branch 4x single-image super-resolution on a minimal
numpy autodiff engine.

Submodules are imported lazily so the CLI can cap BLAS threads before
numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "tensor",
    "reference",
    "blocks",
    "model",
    "losses",
    "data",
    "checkpoint",
    "extractor_io",
    "train",
    "metrics",
    "fixture",
    "config",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
