"""Why the first hidden layer needs its own acceptance step.

On a scalar network (one input, one hidden unit, target y = 2) the posterior of the
first pre-activation is not its prior. Compare P(Z1 > 0) and the output mean under the
deep sampler with and without the layer-1 step, against importance sampling of the prior.
"""

import numpy as np

from depnet.network import Architecture, first_layer, gaussian_log_likelihood, phi_sigma, sample_layer
from depnet.posterior import RejectionConfig, first_layer_step, sample_posterior_deep
from depnet.rand import rng_stream

arch = Architecture((1, 1, 1))
x, y = np.ones((1, 1)), np.array([[2.0]])

# importance oracle over the prior, keeping z1 alongside the output
rng = rng_stream(0)
p = sample_layer(rng, arch, 1, size=400_000)
z1 = first_layer(p.bias, p.weight, x)
z = z1
for layer in (2,):
    p = sample_layer(rng, arch, layer, size=400_000)
    z = phi_sigma(p.bias, p.weight, z, arch.activation)
w = np.exp(gaussian_log_likelihood(z, y))
print(f"oracle        P(Z1>0) = {np.sum(w * (z1.ravel() > 0)) / w.sum():.3f}   E[out] = {np.sum(w * z.ravel()) / w.sum():.3f}")

for reweight in (True, False):
    cfg = RejectionConfig(reweight_first_layer=reweight)
    outs, pos = [], []
    for i in range(4000):
        g = rng_stream(1, i)
        if reweight:
            pos.append(first_layer_step(rng_stream(2, i), x, arch, cfg, y)[0][0, 0] > 0)
        outs.append(sample_posterior_deep(g, arch, x, y, cfg)[0][0, 0])
    frac = f"{np.mean(pos):.3f}" if pos else "0.5 (prior)"
    print(f"reweight={reweight!s:5}  P(Z1>0) = {frac}   E[out] = {np.mean(outs):.3f}")
