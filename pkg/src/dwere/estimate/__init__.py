from dwere.estimate.events import (
    ANNULUS,
    HIT,
    IDENTITY,
    POSITION,
    REACH,
    RETURNS,
    EstimateReport,
    EventSpec,
    Scaling,
    cell_seed,
    estimate_event,
)
from dwere.estimate.oracle import brute_force_probability, exact_probability
from dwere.estimate.suites import (
    check_blocked_position,
    check_concavity,
    check_inclusions,
    check_main_bound,
    check_subadditivity,
    estimate_annulus_decay,
    estimate_rate_function,
    estimate_return_distribution,
    moment_profile,
)
