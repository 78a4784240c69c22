"""
Fitting a BNN surrogate with and without gradient observations.

We draw eight points from a 1D function with two minima, observe values
and derivatives, and train two posterior ensembles with adaptive SGHMC:
one on the joint value+derivative likelihood, one on values alone. The
script prints grid RMSE for both and writes an SVG of the fits.

    python tutorials/01_gradient_informed_fit.py
"""

import numpy as np

from ginnbo import bnn, bo, benchmarks, sghmc, svg

problem = benchmarks.demo1d()
data = bo.initial_design(problem, seed=1, size=8)
print(f"training inputs: {np.round(data.x[:, 0], 3)}")

# Inputs are mapped to [-1, 1] and outputs standardized before training;
# the ensemble undoes this when predicting.
nz = data.normalization
batch = data.to_batch(nz)
arch = bnn.Architecture(1, hidden_layers=3, nodes_per_layer=50)
config = sghmc.SghmcConfig()  # 6000 steps, 2000 burn-in, 50 kept samples

grid = np.linspace(0, 1, 200)[:, None]
truth = np.array([problem.evaluate(x) for x in grid])

fig = svg.Figure(1, 2, title="joint loss vs function-only loss")
for col, lam in enumerate([1.0, 0.0]):
    ens = sghmc.run(batch, arch, config, lambda_grad=lam, seed=0, normalization=nz)
    mean, var, dmean, _ = ens.predict_many(grid)
    sd = np.sqrt(var)
    rmse = np.sqrt(np.mean((mean - truth) ** 2))
    print(f"lambda_grad={lam:g}: {len(ens)} samples, value RMSE {rmse:.3f}, "
          f"mean 2-sigma half-width {2 * sd.mean():.3f}")

    ax = fig[0, col]
    ax.title = f"lambda_grad = {lam:g}"
    ax.band(grid[:, 0], mean - 2 * sd, mean + 2 * sd, color=svg.PALETTE[0])
    ax.line(grid[:, 0], truth, color="#000000", dash="4 3", label="truth")
    ax.line(grid[:, 0], mean, color=svg.PALETTE[0], label="posterior mean")
    ax.points(data.x[:, 0], data.y, color=svg.PALETTE[1])

fig.save("gradient_informed_fit.svg")
print("wrote gradient_informed_fit.svg")
