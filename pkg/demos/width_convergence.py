"""Posterior outputs of the model1 preset at growing width against the wide limit.

Prints the KS distance of each output marginal. Run with ``python3 demos/width_convergence.py``.
"""

import os

from depnet.cli import resolve_config, run_batch
from depnet.metrics import ks_distance, summary

SAMPLES = 500
threads = int(os.environ.get("DEPNET_THREADS", os.cpu_count() or 1))


def marginals(**kw):
    out, _ = run_batch(resolve_config({"preset": "model1", "samples": SAMPLES, **kw}), threads)
    return out[:, 0, :]


limit = marginals(sampler="limit-posterior", seed=7)
print("limit mean per input:", [round(summary(limit[:, j]).mean, 3) for j in range(3)])
for n in (4, 8, 16):
    finite = marginals(width=n, seed=1)
    ks = [ks_distance(finite[:, j], limit[:, j]) for j in range(3)]
    print(f"n={n:3d}  KS " + "  ".join(f"{k:.3f}" for k in ks))
