"""
Consumption and investment with jumping stock prices
====================================================

An investor splits wealth between a bond and a stock whose price jumps by a
lognormal factor, and consumes at a rate c.  With CRRA utility the optimal
stock fraction is a constant pi* and the consumption rate depends on time
only.  We print the reference solution and train Algorithm 2 briefly; the
first argument sets the number of epochs (500 with learning rates 5e-4 bring
c within a few percent and pi within about 0.03 of the reference).
"""
import sys

import numpy as np

from gpipinn import ConsumptionConfig, TrainConfig, consumption_problem, consumption_reference, train_gpi_pinn2
from gpipinn.training import net_eval

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 20

cfg = ConsumptionConfig(n=1)
spec = consumption_problem(cfg)
ref = consumption_reference(cfg)

merton = (cfg.mu[0] - cfg.r) / (cfg.cov[0, 0] * (1 - cfg.gamma_crra))
print(f"pi* with jumps {ref.pi_star[0]:.5f}; without jumps it would be {merton:.5f}")
tg = np.linspace(0, cfg.T, 6)
print("t      :", np.round(tg, 2))
print("A(t)   :", np.round(ref.A(tg).ravel(), 5))
print("c*(t)  :", np.round(ref.rate(tg).ravel(), 5))

tc = TrainConfig(M1=4096, M2=4096, N1=20, N2=10, minibatch_size=512, eta1=5e-4, eta2=5e-4, xi=10.0, k_max=epochs)
res = train_gpi_pinn2(spec, tc)

# average the learned rates over a wealth grid at each time
yg = np.linspace(cfg.y_b / 16, cfg.y_b, 16)
T, Y = np.meshgrid(tg, yg, indexing="ij")
a = net_eval(res.phi, T.reshape(-1, 1), Y.reshape(-1, 1))
print(f"\nafter {len(res.metrics)} epochs")
print("pi(t)  :", np.round(a[:, 0].reshape(len(tg), -1).mean(axis=1), 4))
print("c(t)   :", np.round(a[:, 1].reshape(len(tg), -1).mean(axis=1), 4))
