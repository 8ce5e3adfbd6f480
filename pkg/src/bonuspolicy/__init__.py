"""Design and evaluation of bonus-point affirmative action policies for
centralized, score-based admissions."""

__version__ = "0.1.0"

from bonuspolicy.errors import (
    NotApplicable,
    UndefinedMetric,
    DataError,
    ConfigError,
)
from bonuspolicy.model import (
    Student,
    Program,
    ApplicationSet,
    BonusPolicy,
    ScoreScale,
    admission_score,
    effective_score,
)
from bonuspolicy.matching import MatchOutcome, match, cutoff
from bonuspolicy.metrics import (
    ObjectiveValue,
    ProgramMetrics,
    spd,
    utility,
    objective,
    prestige,
    consistently_unequal,
    classify_spd,
)
from bonuspolicy.policy import (
    BonusGrid,
    PolicySuggestion,
    optimal_bonus,
    suggest_predictive,
    suggest_historical,
    ideal_policy,
    evaluate_strategy,
)
from bonuspolicy.applicants import (
    ApplicantModel,
    SyntheticConfig,
    train,
    sample_application_set,
    generate_synthetic_history,
)
