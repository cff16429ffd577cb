from .baseline import (
    CountModification,
    borda,
    borda_points,
    experience_weighted,
    plurality,
    voter_weight,
)
from .mle import (
    Case3Query,
    Decision,
    case1_oracle,
    case2_weight,
    case3_decide,
    case3_loglik,
    case3_loglik_derivative,
    case3_spread,
    case3_statistic,
    case3_weight,
    case4_scores,
    case5_lower_bound,
    case5_monte_carlo,
    case5_zero_approx,
    pair_weights,
    positivity_functions,
)
