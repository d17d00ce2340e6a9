"""Reference experiments with heavy-tailed hidden-layer variances.

Both use ``c_b = c_w = 1``, a ReLU activation and three inputs
``x(i) = e_i`` in R^4, each with target ``f(x) = ||x||**2 / 10 + 5 = 5.1``.

* ``model1``: two hidden layers of width ``n`` and one output, hidden
  variances ``Y/n`` with ``Y = WE**2``, ``WE ~ Weibull(1, 1/2)``.
* ``model2``: one hidden layer of width ``n`` and one output, hidden
  variances ``pi**2 Y / n**2`` with ``Y = HC**2``, ``HC`` half-Cauchy.
"""

from __future__ import annotations

import numpy as np

from .network import Architecture, DataSet

__all__ = ["PRESETS", "preset_data", "preset_architecture", "target_function"]

PRESETS = {
    "model1": {"depth": 2, "width": 4, "n_in": 4, "n_out": 1, "c_b": 1.0, "c_w": 1.0,
               "activation": "relu", "variance_model": "model1"},
    "model2": {"depth": 1, "width": 2, "n_in": 4, "n_out": 1, "c_b": 1.0, "c_w": 1.0,
               "activation": "relu", "variance_model": "model2"},
}


def target_function(x) -> np.ndarray:
    """``||x(i)||**2 / 10 + 5`` for each column ``x(i)``."""
    x = np.asarray(x, dtype=float)
    return 0.1 * np.sum(x * x, axis=0) + 5.0


def preset_data() -> DataSet:
    x = np.eye(4)[:, :3]
    return DataSet(x, target_function(x)[None, :])


def preset_architecture(name: str, width: int | None = None) -> Architecture:
    p = PRESETS[name]
    n = p["width"] if width is None else int(width)
    widths = (p["n_in"],) + (n,) * p["depth"] + (p["n_out"],)
    return Architecture(widths, p["c_b"], p["c_w"], p["activation"], p["variance_model"])
