"""
The generator from one second derivative
========================================

A value function only enters the Hamiltonian through the generator
dv/dt + beta . grad v + 1/2 Tr(sigma sigma^T Hess v).  Instead of forming the
gradient and Hessian, push k curves through v and read off one second
derivative.  This script compares the two routes on a small network and then
checks the one-mark Hamiltonian against its mark average.
"""
import numpy as np

from gpipinn import autodiff as ad
from gpipinn.generator import extended_hamiltonian_mc, g_tilde, psi_second
from gpipinn.network import Network, NetworkArch, init_params
from gpipinn.problem import LqrConfig, lqr_problem
from gpipinn.reference import lqr_reference

rng = np.random.default_rng(0)

# a random DGM network in (t, x) with x in R^3
d = 3
net = Network(init_params(NetworkArch("dgm", input_dim=d + 1, L=1, N=8), seed=1))
t = rng.uniform(0, 1, size=(4, 1))
x = rng.normal(size=(4, d))

# the LQR problem supplies beta = a and a constant diffusion matrix
cfg = LqrConfig(d=d)
spec = lqr_problem(cfg)
a = rng.normal(size=(4, d))
psi = np.asarray(psi_second(net, t, x, a, spec)).ravel()

# explicit route: reverse-mode gradient, Hessian column by column from
# directional second derivatives
tape = ad.Tape()
tv, xv = tape.leaf(t), tape.leaf(x)
gt, gx = tape.gradient(ad.asum(net(tv, xv)), [tv, xv])
H = np.zeros((4, d, d))
for i in range(d):
    for j in range(d):
        u = np.zeros(d)
        u[i] += 1.0
        u[j] += 1.0
        dd = np.asarray(ad.value_of(net(t, ad.Jet2(x, np.tile(u, (4, 1)), 0.0)).d2)).ravel()
        H[:, i, j] = dd
# polarisation: H_ij = (D_{e_i+e_j} - D_{e_i} - D_{e_j}) / 2 for i != j
diag = np.array([H[:, i, i] / 4.0 for i in range(d)]).T
for i in range(d):
    for j in range(d):
        H[:, i, j] = diag[:, i] if i == j else 0.5 * (H[:, i, j] - diag[:, i] - diag[:, j])
SS = cfg.Sigma @ cfg.Sigma.T
explicit = gt.ravel() + np.sum(a * gx, axis=1) + 0.5 * np.einsum("ij,bij->b", SS, H)

print("psi''(0)          :", np.round(psi, 10))
print("explicit generator:", np.round(explicit, 10))
print("max difference    :", np.abs(psi - explicit).max())

# with jumps, the mark average of the one-mark Hamiltonian is the Monte Carlo
# extended Hamiltonian; at the exact LQR solution both average to zero
cfg = LqrConfig(d=2, Lambda1=0.25, Lambda2=0.5)
spec, ref = lqr_problem(cfg), lqr_reference(cfg)
n = 50_000
tt, xx = np.full((n, 1), 0.4), np.tile([0.8, -0.3], (n, 1))
z = spec.mark_sampler(rng, n)
g = np.asarray(g_tilde(ref.value, tt, xx, z, ref.control(tt, xx), spec)).ravel()
H_mc = extended_hamiltonian_mc(ref.value, tt[:1], xx[:1], ref.control(tt[:1], xx[:1]), z.reshape(1, n, 2), spec)
print(f"\nmean of G - V over {n} marks: {g.mean():+.5f}  (standard error {g.std(ddof=1) / np.sqrt(n):.5f})")
print(f"Monte Carlo extended Hamiltonian with the same marks: {float(np.asarray(H_mc)[0, 0]):+.5f}")
