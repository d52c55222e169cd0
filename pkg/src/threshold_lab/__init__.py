"""Exact expectation thresholds and cover costs of monotone set systems on small ground sets."""

from .cover import (
    CoverBudgetExceeded,
    CoverSolution,
    QValue,
    cover_bruteforce,
    cover_cost,
    q_value,
    subadditivity_check,
    threshold_report,
)
from .fragmentation import (
    ConstantsProfile,
    FragmentationTrace,
    Sampling,
    TheoremVerdict,
    build_profile,
    dcl_verify,
    fragment_once,
    good_fraction,
    induction_step_check,
    m_level,
    optimize_constants,
    recheck_trace,
    run_induction,
    verify_covering_theorem,
)
from .measures import (
    ThresholdReport,
    ThresholdValue,
    expectation,
    mu_by_levels,
    mu_of_set,
    mu_upset_exact,
    mu_upset_mc,
    p_critical,
    p_expectation,
)
from .setfam import (
    Family,
    LevelStats,
    is_l_bounded,
    level_stats,
    minimal_sets,
    restrict,
    up_closure_membership,
)

__version__ = "0.1.0"
