# config/settings.py

# Fixed-point solvers
FIXED_POINT_TOL = 1e-10
MAX_SWEEPS = 100_000

# Invariant tolerances
STOCHASTIC_TOL = 1e-9
SUPPORT_PROB_THRESHOLD = 1e-15

# Grid actions
ACTION_NAMES = ["up", "right", "down", "left", "stay"]
UP, RIGHT, DOWN, LEFT, STAY = range(5)
MOVE_ACTIONS = (UP, RIGHT, DOWN, LEFT)

# Default desk-scale gridworld
DEFAULT_WIDTH = 8
DEFAULT_HEIGHT = 8
DEFAULT_SLIP = 0.1
DEFAULT_GAMMA = 0.95
DEFAULT_STEP_REWARD = 0.0
DEFAULT_GOAL_REWARD = 1.0
DEFAULT_N_SOURCE = 20_000
DEFAULT_N_TARGET = 2_000
DEFAULT_HORIZON = 50

# Behavior policies (epsilon-greedy on the exact optimal Q)
EXPERT_EPSILON = 0.05
MEDIUM_EPSILON = 0.35
QUALITIES = ["medium", "expert", "medium_replay_mix", "medium_expert_mix"]

# Ensemble dynamics
DEFAULT_N_MEMBERS = 7
DEFAULT_SMOOTHING_ALPHA = 0.1

# Training
DIVERGENCE_FACTOR = 10.0
BETA_GRID = [0.1, 0.5, 1.0, 1.2]
DELTA_GRID = [5.0, 10.0, 30.0, 50.0]
ENSEMBLE_SIZE_GRID = [3, 5, 7, 9]

# Test-time perturbation levels
KINEMATIC_LEVELS = {"none": 0.0, "easy": 0.2, "medium": 0.5, "hard": 0.8}
MORPHOLOGY_LEVELS = {"none": 0.0, "easy": 0.15, "medium": 0.35, "hard": 0.6}
PERTURBATION_LEVELS = ["easy", "medium", "hard"]
MORPHOLOGY_TEST_ROTATION = 90
MIN_V_SCALES = {"none": 0.0, "easy": 0.25, "medium": 0.5, "hard": 1.0}
PERTURBATION_KINDS = ["kinematic_analog", "morphology_analog", "min_v_adversarial"]
DEFAULT_EVAL_EPISODES = 1_000
DEFAULT_EVAL_HORIZON = 200

# Verification tolerances
CONTRACTION_TOL = 1e-9
WEAK_DUALITY_TOL = 1e-7
BALL_NESTING_TOL = 1e-9
STRONG_DUALITY_TOL = 1e-4
SOLVER_AGREEMENT_TOL = 1e-8
SANDWICH_TOL = 1e-6
TEST_TIME_TOL = 1e-6
UNIQUENESS_TOL = 1e-6
ORACLE_MATCH_TOL = 1e-8
IDENTITY_TOL = 1e-12
SCORE_SPAN_TOL = 1e-8
STANDARD_ERRORS = 3.0
LAMBDA_GRID_POINTS = 64

# Default trial counts per checker
DEFAULT_TRIALS = {
    "contraction": 200,
    "dual": 200,
    "train_bound": 50,
    "test_bound": 30,
    "overestimation": 50,
    "uniqueness": 100,
    "identities": 20,
}
DEFAULT_PERTURBATIONS = 20
DEFAULT_RESAMPLES = 2_000

# CSV schemas
REPORT_COLUMNS = [
    "condition", "level_or_scale", "seed", "return_mean", "return_std",
    "norm_score", "degradation_pct",
]
LOSS_COLUMNS = ["step", "v_loss", "q_loss_src", "q_loss_tar", "mean_penalty"]
Q_TABLE_COLUMNS = ["state", "action", "q_value"]
