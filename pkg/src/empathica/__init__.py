"""Decision engine, scenario toolkit, and networked runtime for agents
that self-maximize only when that is acceptable to everyone involved."""

from .core import (
    AcceptabilityFunction,
    AcceptabilityRule,
    ActionTuple,
    AgentSpec,
    Aggregation,
    EmpathicaError,
    JointProfile,
    NEG_INF,
    NULL,
    NoFeasibleProfileError,
    POS_INF,
    ProfileError,
    Scenario,
    ScenarioError,
    UtilityFunction,
    UtilityValue,
    argmax_set,
    evaluate_acceptability,
    evaluate_utility,
    first,
    prime_utility,
    validate_scenario,
)
from .engine import (
    Algorithm,
    DecisionReport,
    StrategicGame,
    aggregate,
    decide_full,
    decide_lazy,
    decide_naive,
    determine_act_max,
    determine_good_acts_max,
    enumerate_equilibria,
    has_common_optimum,
    pragmatic_conflict,
    solve_scenario,
)
from .oracle import brute_force_oracle
from .scenarios import (
    BUILTIN_NAMES,
    GeneratorParams,
    builtin,
    generate_random_scenario,
    parse_scenario,
    serialize_scenario,
    spec_digest,
)
from .runtime import (
    EnvironmentServer,
    SessionAborted,
    SessionResult,
    compute_rewards,
    run_agent_client,
    serve_environment,
)

__version__ = "0.1.0"
