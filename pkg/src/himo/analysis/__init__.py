from .counting import (
    bootstrap_contrast,
    counting_experiment,
    designed_samples,
    estimate_mse,
    factored_estimate,
    joint_estimate,
    nstep_targets_from_start,
    samples_to_zero_error,
)
from .probe import LN2, ProbeResult, probe_fit
from .proposition import (
    PropositionInstance,
    PropositionReport,
    monte_carlo_check,
    proposition_check,
    proposition_threshold,
    random_instance,
    run_proposition_suite,
)
from .value_error import ESTIMATORS, MrpComparison, MrpTrainConfig, value_error_eval

__all__ = [
    "ESTIMATORS", "LN2", "MrpComparison", "MrpTrainConfig", "ProbeResult", "PropositionInstance",
    "PropositionReport", "bootstrap_contrast", "counting_experiment", "designed_samples",
    "estimate_mse", "factored_estimate", "joint_estimate", "monte_carlo_check",
    "nstep_targets_from_start", "probe_fit", "proposition_check", "proposition_threshold",
    "random_instance", "run_proposition_suite", "samples_to_zero_error", "value_error_eval",
]
