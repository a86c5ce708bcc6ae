from .adjoint import adjoint_gradient_at_noised, adjoint_input_gradient, ode_forward_trajectory
from .pgd import (
    AttackConfig,
    AttackStats,
    attack_success,
    attacker_view,
    eot_gradient,
    loss_gradient,
    pgd_attack,
)
from .threat import ThreatModel, project, satisfies

__all__ = [
    "AttackConfig",
    "AttackStats",
    "ThreatModel",
    "adjoint_gradient_at_noised",
    "adjoint_input_gradient",
    "attack_success",
    "attacker_view",
    "eot_gradient",
    "loss_gradient",
    "ode_forward_trajectory",
    "pgd_attack",
    "project",
    "satisfies",
]
