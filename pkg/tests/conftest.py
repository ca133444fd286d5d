from __future__ import annotations

import pytest

from empathica.core import (
    AcceptabilityFunction,
    AcceptabilityRule,
    ActionTuple,
    AgentSpec,
    Aggregation,
    JointProfile,
    Scenario,
    UtilityFunction,
    UtilityValue,
    validate_scenario,
)
from empathica.scenarios import builtin


@pytest.fixture
def vehicles() -> Scenario:
    return builtin("vehicles")


@pytest.fixture
def concert() -> Scenario:
    return builtin("concert")


def profile_of(scenario: Scenario, *actions: str) -> JointProfile:
    """Singleton-tuple profile from one action name per agent."""
    return JointProfile(
        tuple(ActionTuple(spec.id, (a,)) for spec, a in zip(scenario.agents, actions))
    )


def build_game(
    agent_actions: dict[str, list[str]],
    utilities: dict[str, dict[tuple[str, ...], float | None | UtilityValue]],
    unacceptable: tuple[tuple[str, ...], ...] = (),
    aggregation: Aggregation = Aggregation.PRODUCT,
    name: str = "test-game",
    validate: bool = True,
) -> Scenario:
    """Compact scenario builder for hand-made singleton-action games.

    ``utilities[agent]`` maps action-name tuples (one name per agent, in
    agent order) to values; missing profiles stay null. ``unacceptable``
    profiles get an equality rule with value false on the first agent's
    acceptability function.
    """
    agents = tuple(AgentSpec(a, tuple(acts)) for a, acts in agent_actions.items())

    def prof(key: tuple[str, ...]) -> JointProfile:
        return JointProfile(
            tuple(ActionTuple(spec.id, (act,)) for spec, act in zip(agents, key))
        )

    funcs = []
    for spec in agents:
        table = {}
        for key, raw in utilities.get(spec.id, {}).items():
            value = raw if isinstance(raw, UtilityValue) else UtilityValue(raw)
            if not value.is_null:
                table[prof(key)] = value
        funcs.append(UtilityFunction.direct(spec.id, table))

    rules = tuple(AcceptabilityRule(value=False, equals=prof(key)) for key in unacceptable)
    acceptability = tuple(
        AcceptabilityFunction(spec.id, rules if i == 0 else ())
        for i, spec in enumerate(agents)
    )

    scenario = Scenario(
        name=name,
        agents=agents,
        utilities=tuple(funcs),
        acceptability=acceptability,
        aggregation=aggregation,
    )
    if validate:
        validate_scenario(scenario)
    return scenario


def matching_pennies() -> Scenario:
    """No pure equilibrium: one agent wants to match, the other to differ."""
    return build_game(
        {"A": ["heads_A", "tails_A"], "B": ["heads_B", "tails_B"]},
        {
            "A": {
                ("heads_A", "heads_B"): 2.0,
                ("heads_A", "tails_B"): 0.0,
                ("tails_A", "heads_B"): 0.0,
                ("tails_A", "tails_B"): 2.0,
            },
            "B": {
                ("heads_A", "heads_B"): 1.0,
                ("heads_A", "tails_B"): 2.0,
                ("tails_A", "heads_B"): 2.0,
                ("tails_A", "tails_B"): 1.0,
            },
        },
    )
