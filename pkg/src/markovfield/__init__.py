"""markovfield: Gaussian fields associated with Dirichlet forms on finite
weighted graphs, with exact and Monte Carlo verification of their
Markov-type properties.
"""

from .space import Space, boundary, thickened_complement, vertex_set
from .forms import (
    Classification,
    DirichletForm,
    NotMarkovianError,
    classify,
    form_from_components,
    is_local_wrt,
    validate_markovian,
)
from .potential import (
    Spectrum,
    energy,
    green_apply,
    green_operator,
    hitting,
    part_hitting,
    potential,
    spectrum,
    trace_form,
)
from .field import (
    CondIndepResult,
    FunctionalSubspace,
    GaussianField,
    cond_expect,
    cond_indep,
    conditional_resample,
    join,
    meet,
    realize,
    sample_batch,
    sigma_field,
    zero_subspace,
)
from .markov import (
    MarkovReport,
    check_markov,
    check_pseudo_markov,
    check_sigma_join_identity,
    check_spectrum_criterion,
    check_two_set,
    equivalence_scan,
)
from .stopping import (
    ExplorationRule,
    SetBasis,
    StoppingSample,
    ThresholdPredicate,
    discretize_set,
    run_exploration,
    run_exploration_batch,
    rule_from_config,
    sigma_discrete_equality_check,
    strong_markov_mc,
    verify_stopping_hypothesis,
)
from .experiments import (
    ExperimentConfig,
    Report,
    example_circle_average,
    example_diagonal,
    example_disk_trace,
    example_half_line,
    run_experiment,
)
from .fileio import FormFormatError, dump_form, load_form, parse_form, save_form
from .linalg import SingularSystemError

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "CondIndepResult",
    "DirichletForm",
    "ExperimentConfig",
    "ExplorationRule",
    "FormFormatError",
    "FunctionalSubspace",
    "GaussianField",
    "MarkovReport",
    "NotMarkovianError",
    "Report",
    "SetBasis",
    "SingularSystemError",
    "Space",
    "Spectrum",
    "StoppingSample",
    "ThresholdPredicate",
    "boundary",
    "check_markov",
    "check_pseudo_markov",
    "check_sigma_join_identity",
    "check_spectrum_criterion",
    "check_two_set",
    "classify",
    "cond_expect",
    "cond_indep",
    "conditional_resample",
    "discretize_set",
    "dump_form",
    "energy",
    "equivalence_scan",
    "example_circle_average",
    "example_diagonal",
    "example_disk_trace",
    "example_half_line",
    "form_from_components",
    "green_apply",
    "green_operator",
    "hitting",
    "is_local_wrt",
    "join",
    "load_form",
    "meet",
    "parse_form",
    "part_hitting",
    "potential",
    "realize",
    "rule_from_config",
    "run_experiment",
    "run_exploration",
    "run_exploration_batch",
    "sample_batch",
    "save_form",
    "sigma_discrete_equality_check",
    "sigma_field",
    "spectrum",
    "strong_markov_mc",
    "thickened_complement",
    "trace_form",
    "validate_markovian",
    "verify_stopping_hypothesis",
    "vertex_set",
    "zero_subspace",
]
