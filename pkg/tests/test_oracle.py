import pytest

from empathica.engine import Algorithm, StrategicGame, enumerate_equilibria, solve_scenario
from empathica.oracle import EnumerationBoundExceeded, brute_force_oracle, oracle_equilibria
from empathica.scenarios import GeneratorParams, builtin, generate_random_scenario

from conftest import matching_pennies


def _random_scenario(seed: int, agent_count: int = 2, actions: int = 3):
    return generate_random_scenario(
        GeneratorParams(
            seed=seed,
            agent_count=agent_count,
            actions_per_agent=actions,
            unacceptable_fraction=0.35,
            null_fraction=0.25,
        )
    )


@pytest.mark.parametrize("name", ["vehicles", "concert"])
@pytest.mark.parametrize("algorithm", list(Algorithm))
def test_oracle_matches_engine_on_builtins(name, algorithm):
    scenario = builtin(name)
    assert brute_force_oracle(scenario, algorithm) == solve_scenario(scenario, algorithm)


@pytest.mark.parametrize("seed", range(100))
def test_oracle_matches_engine_on_random_scenarios(seed):
    scenario = _random_scenario(seed)
    for algorithm in Algorithm:
        assert brute_force_oracle(scenario, algorithm) == solve_scenario(scenario, algorithm)


@pytest.mark.parametrize("seed", range(40))
@pytest.mark.parametrize("agent_count,actions", [(2, 4), (3, 3), (4, 2)])
def test_equilibrium_sets_agree(seed, agent_count, actions):
    scenario = _random_scenario(seed, agent_count, actions)
    game = StrategicGame.from_scenario(scenario, primed=True)
    assert enumerate_equilibria(game) == oracle_equilibria(scenario)


def test_equilibrium_agreement_on_degenerate_games(vehicles):
    assert oracle_equilibria(vehicles) == enumerate_equilibria(
        StrategicGame.from_scenario(vehicles, primed=True)
    )
    pennies = matching_pennies()
    assert oracle_equilibria(pennies) == set()


def test_profile_bound_is_enforced():
    scenario = _random_scenario(0, agent_count=3, actions=3)
    with pytest.raises(EnumerationBoundExceeded):
        brute_force_oracle(scenario, Algorithm.NAIVE, max_profiles=10)
