"""Treatment-effect estimation under Markovian interference.

Exact model analytics for two-action MDPs, a seeded simulator for the
1/2-randomized experiment, the Naive, DQ and off-policy LSTD estimators,
variance formulas with their bounds, and a multi-seed experiment harness.
"""

from .bounds import (
    VarianceReport,
    check_entrywise_nonexpansive,
    cramer_rao,
    dq_asymptotic_variance,
    dq_variance_bound,
    variance_report,
)
from .chain_core import (
    analyze_chain,
    estimate_mixing,
    group_inverse,
    stationary_distribution,
)
from .empirical import EmpiricalModel
from .environments import (
    BirthDeathParams,
    RentalParams,
    TwoStateParams,
    birth_death_family,
    build_environment,
    random_mdp,
    rental_jump_chain,
    two_state,
)
from .errors import MarkovATEError
from .estimators import (
    ESTIMATORS,
    EstimateResult,
    dq_kth_order,
    dq_lstd,
    dq_lstd_regularized,
    naive,
    offpolicy_lstd,
)
from .harness import ExperimentConfig, bias_order_sweep, report, run_experiment
from .mdp import (
    HALF,
    ExperimentPolicy,
    TwoActionMdp,
    exact_analytics,
    kth_order_dq_expected,
    taylor_expand_ate,
)
from .simulate import Trajectory, empirical_model, simulate

__version__ = "0.1.0"
