"""Generalized policy iteration with physics-informed networks for controlled jump-diffusions."""
from .autodiff import Jet2, Tape, grad, grad_through_jet, jet2_eval
from .evaluation import make_test_grid, mae_control, mae_value, residual_grid
from .generator import extended_hamiltonian_mc, g_tilde, g_value, psi_second
from .network import Network, NetworkArch, ParameterVector, init_params, load_checkpoint, save_checkpoint
from .problem import ConsumptionConfig, LqrConfig, ProblemSpec, consumption_problem, lqr_problem
from .reference import consumption_reference, lqr_reference, mc_policy_value, simulate_paths
from .sampling import sample_batch
from .trainer_recursive import train_gpi_pinn2
from .trainer_residual import train_gpi_pinn1
from .training import MetricsRow, TrainConfig, relative_errors

__all__ = [
    "Jet2", "Tape", "grad", "grad_through_jet", "jet2_eval",
    "make_test_grid", "mae_control", "mae_value", "residual_grid",
    "extended_hamiltonian_mc", "g_tilde", "g_value", "psi_second",
    "Network", "NetworkArch", "ParameterVector", "init_params", "load_checkpoint", "save_checkpoint",
    "ConsumptionConfig", "LqrConfig", "ProblemSpec", "consumption_problem", "lqr_problem",
    "consumption_reference", "lqr_reference", "mc_policy_value", "simulate_paths",
    "sample_batch", "train_gpi_pinn1", "train_gpi_pinn2", "MetricsRow", "TrainConfig", "relative_errors",
]
