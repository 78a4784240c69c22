"""
Comparing LCB and LogEI on one trained ensemble.

LogEI is evaluated through a stable log h(z), so it stays finite and has
useful gradients far from the incumbent where plain EI underflows to zero.
We train one surrogate, tabulate both criteria on a grid and let the
optimizer pick a point under each.

    python tutorials/03_acquisition_functions.py
"""

import numpy as np

from ginnbo import acquisition, benchmarks, bnn, bo, sghmc

problem = benchmarks.demo1d()
data = bo.initial_design(problem, seed=4, size=6)
nz = data.normalization
ens = sghmc.run(data.to_batch(nz), bnn.Architecture(1, 2, 30), sghmc.SghmcConfig(2000, 1000, sampling_interval=20),
                lambda_grad=1.0, seed=0, normalization=nz)

incumbent = data.incumbent
print(f"incumbent f = {incumbent:.4f}")
print("     x      mu   sigma     LCB   log EI")
for x in np.linspace(0, 1, 11):
    m, v, _, _ = ens.predict_many([[x]])
    lcb = acquisition.lcb(ens, [x], 2.0)
    lei = acquisition.log_ei(ens, [x], incumbent)
    print(f"{x:6.2f} {m[0]:7.3f} {np.sqrt(v[0]):7.3f} {lcb:7.3f} {lei:8.3f}")

# Far below the incumbent, EI itself is ~1e-300 or smaller, while log EI is
# an ordinary negative number.
print("log h(-40) =", float(acquisition.log_h(np.array([-40.0]))[0]))

opt = acquisition.OptimizerConfig(restarts=10, bounds=problem.bounds)
for spec in (acquisition.AcquisitionSpec("LCB", 2.0), acquisition.AcquisitionSpec("LogEI", incumbent=incumbent)):
    res = acquisition.optimize(ens, spec, opt, seed=0)
    print(f"{spec.kind:5s} picks x = {res.x[0]:.4f}")
