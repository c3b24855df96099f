# mdp_core package
from mdp_core.mdp import FiniteMDP, TabularPolicy, TabularQ, TabularV, validate
from mdp_core.planning import optimal_q_in_sample, policy_eval_exact
from mdp_core.transport import (
    lambda_dual_value,
    lipschitz_constant,
    robust_inf_over_w1_ball,
    wasserstein_1,
)
