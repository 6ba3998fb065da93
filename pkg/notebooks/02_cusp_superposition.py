# Superposing beams through a cusp caustic and comparing against the spectral solver.
import numpy as np

from beamforge.convergence import SweepConfig, fit_with_policy, run_sweep

# A coarse three-eps sweep; the full study goes down to eps = 2^-8.
cfg = SweepConfig(problem="cusp", orders=(1,), epsilons=(2**-4, 2**-5, 2**-6),
                  times=(0.25, 1.0)).resolved()
report = run_sweep(cfg, progress=lambda r: print(
    f"eps=2^{np.log2(r.epsilon):.0f} t={r.time:g} energy error {r.absolute_error:.3e}"))

for t in cfg.times:
    eps, errs = report.errors(1, t)
    fit = fit_with_policy(eps, errs, 1)
    # coarse eps only, so the slope sits below its asymptotic value of 1
    print(f"t={t:g}: slope {fit.slope:.2f}")
