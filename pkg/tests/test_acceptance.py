"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with -v or -s to see them). Everything here is seeded and
deterministic; expected values are exact unless a tolerance is stated."""

import random
import threading
import time

import pytest

from empathica.core import (
    NEG_INF,
    AcceptabilityFunction,
    Scenario,
    UtilityFunction,
    UtilityValue,
    validate_scenario,
)
from empathica.engine import (
    Algorithm,
    StrategicGame,
    enumerate_equilibria,
    solve_scenario,
)
from empathica.oracle import brute_force_oracle, oracle_equilibria
from empathica.runtime import EnvironmentServer, SessionAborted, run_agent_client
from empathica.scenarios import (
    GeneratorParams,
    builtin,
    generate_random_scenario,
    parse_scenario,
    parse_scenario_document,
    scenario_document,
    serialize_scenario,
    spec_digest,
)

from conftest import profile_of


def _pass(number: int, text: str) -> None:
    print(f"criterion {number:02d} PASS: {text}")


def _random_scenario(seed: int) -> Scenario:
    return generate_random_scenario(
        GeneratorParams(
            seed=seed,
            agent_count=2 + seed % 2,
            actions_per_agent=2 + seed % 3,
            unacceptable_fraction=(seed % 5) / 10,
            null_fraction=(seed % 4) / 10,
        )
    )


# ---------------------------------------------------------------------------
# 1-5: the two built-in scenarios reproduce their published walkthroughs
# ---------------------------------------------------------------------------


def test_criterion_01_vehicles_naive():
    vehicles = builtin("vehicles")
    report = solve_scenario(vehicles, Algorithm.NAIVE)
    assert report.joint == profile_of(vehicles, "drive_A", "drive_B")
    assert report.utilities == {"A": NEG_INF, "B": NEG_INF}
    _pass(1, "vehicles all-naive ends in the crash profile with -inf for both")


def test_criterion_02_vehicles_lazy_equals_full():
    vehicles = builtin("vehicles")
    lazy = solve_scenario(vehicles, Algorithm.LAZY)
    full = solve_scenario(vehicles, Algorithm.FULL)
    expected_joint = profile_of(vehicles, "wait_A", "drive_B")
    for report in (lazy, full):
        assert report.joint == expected_joint
        assert report.utilities == {"A": UtilityValue(0.9), "B": UtilityValue(1.0)}
    assert lazy.choices == full.choices
    _pass(2, "vehicles lazy and full both pick (wait_A, drive_B) with (0.9, 1)")


def test_criterion_03_concert_naive():
    concert = builtin("concert")
    report = solve_scenario(concert, Algorithm.NAIVE)
    assert report.joint == profile_of(concert, "Bach_A", "Mozart_B")
    assert report.utilities == {"A": UtilityValue(1.0), "B": UtilityValue(1.0)}
    _pass(3, "concert all-naive splits to (Bach_A, Mozart_B) with (1, 1)")


def test_criterion_04_concert_lazy():
    concert = builtin("concert")
    report = solve_scenario(concert, Algorithm.LAZY)
    assert report.joint == profile_of(concert, "Mozart_A", "Mozart_B")
    assert report.utilities == {"A": UtilityValue(3.0), "B": UtilityValue(4.0)}
    _pass(4, "concert all-lazy agrees on Mozart with (3, 4)")


def test_criterion_05_concert_full_prefers_product_maximal_equilibrium():
    """Both Bach/Bach and Mozart/Mozart are equilibria of the restricted
    game; the full algorithm keeps the one with the larger utility product
    (3 * 4 = 12 beats 6 * 1.1 = 6.6), so Mozart/Mozart is selected. The
    historically quoted Bach/Bach outcome with (6, 1.1) contradicts that
    selection rule and is asserted against here on purpose."""
    concert = builtin("concert")
    report = solve_scenario(concert, Algorithm.FULL)
    assert report.joint == profile_of(concert, "Mozart_A", "Mozart_B")
    assert report.utilities == {"A": UtilityValue(3.0), "B": UtilityValue(4.0)}
    assert report.equilibria == {
        profile_of(concert, "Bach_A", "Bach_B"),
        profile_of(concert, "Mozart_A", "Mozart_B"),
    }
    assert brute_force_oracle(concert, Algorithm.FULL) == report
    # the divergent outcome that the selection rule rules out:
    assert report.joint != profile_of(concert, "Bach_A", "Bach_B")
    assert report.utilities != {"A": UtilityValue(6.0), "B": UtilityValue(1.1)}
    _pass(5, "concert all-full picks Mozart/Mozart (3, 4), oracle-confirmed")


# ---------------------------------------------------------------------------
# 6-7: oracle equivalence at scale
# ---------------------------------------------------------------------------


def test_criterion_06_equilibrium_oracle_equivalence_500():
    started = time.monotonic()
    mismatches = 0
    for seed in range(500):
        scenario = _random_scenario(seed)
        engine_set = enumerate_equilibria(StrategicGame.from_scenario(scenario, primed=True))
        if engine_set != oracle_equilibria(scenario):
            mismatches += 1
    elapsed = time.monotonic() - started
    assert mismatches == 0
    assert elapsed < 60.0
    _pass(6, f"equilibria match the best-response oracle on 500 scenarios in {elapsed:.1f}s")


def test_criterion_07_algorithm_oracle_equivalence_200():
    mismatches = 0
    for seed in range(200):
        scenario = _random_scenario(seed)
        for algorithm in Algorithm:
            if solve_scenario(scenario, algorithm) != brute_force_oracle(scenario, algorithm):
                mismatches += 1
    assert mismatches == 0
    _pass(7, "all three algorithms match the brute-force oracle on 200 scenarios")


# ---------------------------------------------------------------------------
# 8: property suite
# ---------------------------------------------------------------------------


def test_criterion_08a_determinism_across_runs():
    violations = 0
    for seed in range(200):
        scenario = _random_scenario(seed)
        reparsed = parse_scenario(serialize_scenario(scenario))
        for algorithm in Algorithm:
            if solve_scenario(scenario, algorithm) != solve_scenario(reparsed, algorithm):
                violations += 1
    assert violations == 0
    _pass(8, "determinism: identical reports across runs and round-tripped inputs")


def test_criterion_08b_acceptability_guarantee():
    violations = 0
    for seed in range(200):
        scenario = _random_scenario(seed)
        for algorithm in (Algorithm.LAZY, Algorithm.FULL):
            report = solve_scenario(scenario, algorithm)
            if not all(acc.evaluate(report.joint) is True for acc in scenario.acceptability):
                violations += 1
    assert violations == 0
    _pass(8, "acceptability: all-lazy and all-full joints acceptable on 200 scenarios")


def _scaled(scenario: Scenario, factors: dict[str, float]) -> Scenario:
    utilities = []
    for u in scenario.utilities:
        c = factors[u.agent]
        utilities.append(
            UtilityFunction.direct(
                u.agent,
                {
                    p: UtilityValue(v.value * c) if v.is_finite else v
                    for p, v in u.table.items()
                },
            )
        )
    return Scenario(
        name=scenario.name,
        agents=scenario.agents,
        utilities=tuple(utilities),
        acceptability=scenario.acceptability,
        aggregation=scenario.aggregation,
    )


def test_criterion_08c_positive_scaling_invariance():
    # power-of-two factors keep float multiplication exact
    violations = 0
    for seed in range(200):
        scenario = _random_scenario(seed)
        rng = random.Random(seed * 31 + 7)
        factors = {a: rng.choice([0.25, 0.5, 2.0, 4.0, 8.0]) for a in scenario.agent_ids}
        scaled = _scaled(scenario, factors)
        for algorithm in Algorithm:
            if solve_scenario(scenario, algorithm).choices != solve_scenario(scaled, algorithm).choices:
                violations += 1
    assert violations == 0
    _pass(8, "scaling: per-agent positive rescaling never changes selected tuples")


def _forced_common_optimum(seed: int) -> tuple[Scenario, "object"]:
    base = _random_scenario(seed)
    rng = random.Random(seed ^ 0x5EED)
    profiles = list(base.profiles())
    target = profiles[rng.randrange(len(profiles))]
    utilities = []
    for u in base.utilities:
        table = dict(u.table)
        ceiling = max(
            (v.value for p, v in table.items() if p != target and v.is_finite), default=0.0
        )
        table[target] = UtilityValue(ceiling + 1.0)
        utilities.append(UtilityFunction.direct(u.agent, table))
    acceptability = tuple(
        AcceptabilityFunction(acc.agent, tuple(r for r in acc.rules if r.equals != target))
        for acc in base.acceptability
    )
    scenario = Scenario(
        name=f"{base.name}-aligned",
        agents=base.agents,
        utilities=tuple(utilities),
        acceptability=acceptability,
        aggregation=base.aggregation,
    )
    validate_scenario(scenario)
    return scenario, target


def test_criterion_08d_no_conflict_collapse():
    violations = 0
    for seed in range(200):
        scenario, target = _forced_common_optimum(seed)
        for algorithm in Algorithm:
            if solve_scenario(scenario, algorithm).joint != target:
                violations += 1
    assert violations == 0
    _pass(8, "collapse: a unique acceptable common optimum is chosen by all algorithms")


# ---------------------------------------------------------------------------
# 9: networked end-to-end
# ---------------------------------------------------------------------------


def _run_session(scenario: Scenario, algorithm: Algorithm, timeout: float = 5.0):
    server = EnvironmentServer(scenario, port=0, commit_timeout=timeout)
    server.start()
    errors = {}

    def worker(agent_id):
        try:
            run_agent_client(server.endpoint, agent_id, algorithm, scenario, timeout=timeout)
        except Exception as exc:
            errors[agent_id] = exc

    threads = [threading.Thread(target=worker, args=(a,)) for a in scenario.agent_ids]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout * 3)
    result = server.result(timeout=timeout * 3)
    server.close()
    assert not errors, errors
    return result


def test_criterion_09_networked_sessions_match_solver():
    cases = [(builtin("vehicles"), algo) for algo in Algorithm]
    cases += [(builtin("concert"), algo) for algo in Algorithm]
    for seed in range(50):
        cases.append((_random_scenario(seed), list(Algorithm)[seed % 3]))
    for scenario, algorithm in cases:
        report = solve_scenario(scenario, algorithm)
        result = _run_session(scenario, algorithm)
        assert result.ok, (scenario.name, algorithm, result)
        assert result.joint == report.joint
        assert result.utilities == report.utilities
    _pass(9, f"{len(cases)} networked sessions reproduced the in-process reports")


def test_criterion_09_corrupted_spec_triggers_spec_mismatch():
    vehicles = builtin("vehicles")
    doc = scenario_document(vehicles)
    doc["utilities"][0]["quantification"][1]["value"] = 0.123
    corrupted = parse_scenario_document(doc)
    assert spec_digest(corrupted) != spec_digest(vehicles)

    server = EnvironmentServer(vehicles, port=0, commit_timeout=5.0)
    server.start()
    with pytest.raises(SessionAborted) as exc:
        run_agent_client(server.endpoint, "A", Algorithm.FULL, corrupted, timeout=5.0)
    assert exc.value.code == "spec_mismatch"
    assert server.result(timeout=5.0).error_code == "spec_mismatch"
    _pass(9, "a corrupted client spec aborts the session with spec_mismatch")


# ---------------------------------------------------------------------------
# 10: built-in tables byte-match the published values
# ---------------------------------------------------------------------------


def test_criterion_10_builtin_tables_in_canonical_form():
    vehicles_text = serialize_scenario(builtin("vehicles"))
    vehicles_doc = scenario_document(builtin("vehicles"))
    u_a, u_b = vehicles_doc["utilities"]

    assert u_a["consequences"] == [
        {"profile": [["drive_A"], ["drive_B"]], "atoms": ["crash"]},
        {"profile": [["drive_A"], ["wait_B"]], "atoms": ["wait 0"]},
        {"profile": [["wait_A"], ["drive_B"]], "atoms": ["wait 10"]},
        {"profile": [["wait_A"], ["wait_B"]], "atoms": ["wait ∞"]},
    ]
    assert u_a["quantification"] == [
        {"atoms": ["crash"], "value": "-inf"},
        {"atoms": ["wait 0"], "value": 1.0},
        {"atoms": ["wait 10"], "value": 0.9},
        {"atoms": ["wait ∞"], "value": 0.0},
    ]
    assert u_b["consequences"] == [
        {"profile": [["drive_A"], ["drive_B"]], "atoms": ["crash"]},
        {"profile": [["drive_A"], ["wait_B"]], "atoms": ["wait 20"]},
        {"profile": [["wait_A"], ["drive_B"]], "atoms": ["wait 0"]},
        {"profile": [["wait_A"], ["wait_B"]], "atoms": ["wait ∞"]},
    ]
    assert u_b["quantification"] == [
        {"atoms": ["crash"], "value": "-inf"},
        {"atoms": ["wait 0"], "value": 1.0},
        {"atoms": ["wait 20"], "value": 0.8},
        {"atoms": ["wait ∞"], "value": 0.0},
    ]
    for snippet in ('"value": 0.9', '"value": 0.8', '"value": "-inf"', '"wait ∞"'):
        assert snippet in vehicles_text

    concert_doc = scenario_document(builtin("concert"))
    concert_text = serialize_scenario(builtin("concert"))
    table_a = {
        tuple(tuple(c) for c in row["profile"]): row["value"]
        for row in concert_doc["utilities"][0]["table"]
    }
    table_b = {
        tuple(tuple(c) for c in row["profile"]): row["value"]
        for row in concert_doc["utilities"][1]["table"]
    }
    assert table_a == {
        (("Bach_A",), ("Bach_B",)): 6.0,
        (("Bach_A",), ("Mozart_B",)): 1.0,
        (("Bach_A",), ("Stravinsky_B",)): 1.0,
        (("Mozart_A",), ("Bach_B",)): 1.0,
        (("Mozart_A",), ("Mozart_B",)): 3.0,
        (("Mozart_A",), ("Stravinsky_B",)): 1.0,
        (("Stravinsky_A",), ("Bach_B",)): 4.0,
        (("Stravinsky_A",), ("Mozart_B",)): 4.0,
        (("Stravinsky_A",), ("Stravinsky_B",)): 5.0,
    }
    assert table_b == {
        (("Bach_A",), ("Bach_B",)): 1.1,
        (("Bach_A",), ("Mozart_B",)): 1.0,
        (("Bach_A",), ("Stravinsky_B",)): 1.0,
        (("Mozart_A",), ("Bach_B",)): 1.0,
        (("Mozart_A",), ("Mozart_B",)): 4.0,
        (("Mozart_A",), ("Stravinsky_B",)): 1.0,
        (("Stravinsky_A",), ("Bach_B",)): 1.0,
        (("Stravinsky_A",), ("Mozart_B",)): 1.0,
        (("Stravinsky_A",), ("Stravinsky_B",)): 2.0,
    }
    assert '"value": 1.1' in concert_text
    assert concert_doc["acceptability"] == [
        {"agent": "A", "rules": [{"value": False, "contains": ["Stravinsky_A"]}]},
        {"agent": "B", "rules": [{"value": False, "contains": ["Stravinsky_A"]}]},
    ]
    _pass(10, "built-in tables carry the published values in canonical form")
