"""Closed-loop power allocation for parallel QPSK channels: a fast
projected-gradient optimizer steered by a language-model navigator behind
multi-layer guardrails."""

from .mi import (
    Constellation,
    NoiseModel,
    SampleSet,
    draw_samples,
    mi_and_gradient,
    mi_estimate,
    mi_estimate_with_se,
    mi_exact,
    mi_gradient,
    qpsk,
    weighted_objective,
)
from .navigator import (
    GuardrailConfig,
    NavigatorLogEntry,
    NavigatorService,
    Policy,
    apply_ema,
    clamp_budget,
    compose_prompt,
    format_state_summary,
    navigator_cycle,
    parse_action,
    sanitize_weights,
)
from .optimizer import PowerOptimizer, clamp_floor, gradient_step, project_ball, run_loop
from .scenarios import (
    MetricsReport,
    Scenario,
    compute_spread,
    export_report,
    run_policy_experiment,
    run_resilience,
    run_scenario,
)
from .state import Allocation, ChannelState, ControlParams, OptimizerConfig, StepRecord
from .waterfilling import WaterfillingSolution, waterfilling

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ChannelState",
    "Constellation",
    "ControlParams",
    "GuardrailConfig",
    "MetricsReport",
    "NavigatorLogEntry",
    "NavigatorService",
    "NoiseModel",
    "OptimizerConfig",
    "Policy",
    "PowerOptimizer",
    "SampleSet",
    "Scenario",
    "StepRecord",
    "WaterfillingSolution",
    "apply_ema",
    "clamp_budget",
    "clamp_floor",
    "compose_prompt",
    "compute_spread",
    "draw_samples",
    "export_report",
    "format_state_summary",
    "gradient_step",
    "mi_and_gradient",
    "mi_estimate",
    "mi_estimate_with_se",
    "mi_exact",
    "mi_gradient",
    "navigator_cycle",
    "parse_action",
    "project_ball",
    "qpsk",
    "run_loop",
    "run_policy_experiment",
    "run_resilience",
    "run_scenario",
    "sanitize_weights",
    "waterfilling",
    "weighted_objective",
]
