"""
Jump LQR: reference solution, Monte Carlo check and a short training run
=======================================================================

The linear-quadratic problem with Gaussian jumps has a value function
h(t)|x|^2/2 + f(t), where h solves a scalar Riccati-type ODE.  We solve it,
confirm it against simulated rewards, and train both GPI-PINN variants for a
few epochs.  Pass an epoch count as the first argument for a longer run
(around 300 epochs of Algorithm 2 reach a few percent relative error in d=2).
"""
import sys
import time

import numpy as np

from gpipinn import (LqrConfig, TrainConfig, lqr_problem, lqr_reference, make_test_grid, mc_policy_value,
                     relative_errors, train_gpi_pinn1, train_gpi_pinn2)

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

cfg = LqrConfig(d=2, Lambda1=0.25)
spec = lqr_problem(cfg)
ref = lqr_reference(cfg)

# h(t) from RK45 with dense Hermite output
for t in (0.0, 0.5, 1.0):
    print(f"h({t}) = {float(ref.h(np.array([t]))[0]):.6f}")

# simulated reward of the optimal feedback from a few starting points
for x0 in (0.0, 1.0):
    x = np.full((1, 2), x0)
    est, se = mc_policy_value(spec, ref.control, 0.0, x, n_paths=2000, dt=1e-2, seed=1)
    v = float(np.asarray(ref.value(np.zeros((1, 1)), x))[0, 0])
    print(f"x0 = ({x0}, {x0}): simulated {est:.4f} +- {se:.4f}, closed form {v:.4f}")

# the two algorithms at equal batch and step settings
tc = TrainConfig(M1=2048, M2=2048, M3=16, N1=20, N2=10, minibatch_size=512, k_max=epochs)
pts = make_test_grid(spec, 2048, seed=3)
for name, train, xi in (("Algorithm 1", train_gpi_pinn1, 1.0), ("Algorithm 2", train_gpi_pinn2, 45.0)):
    tc.xi = xi
    start = time.perf_counter()
    res = train(spec, tc)
    rv, ra = relative_errors(res.theta, res.phi, ref, pts)
    secs = time.perf_counter() - start
    print(f"{name}: {len(res.metrics)} epochs in {secs:.1f}s ({secs / len(res.metrics):.2f}s each), "
          f"relative MAE of V {rv:.3f}, of the control {ra:.3f}")
