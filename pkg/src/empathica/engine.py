"""Conflict detection and the three decision algorithms.

A naive agent maximizes its own utility subject to acceptability. A lazy
agent additionally checks that everyone self-maximizing would not hurt its
own maximum, else maximizes shared utility. A full agent selects among the
pure-strategy equilibria of the acceptability-restricted game, preferring
maximal shared utility, with the shared maximum as fallback.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

from .core import (
    AcceptabilityFunction,
    ActionTuple,
    Aggregation,
    EmpathicaError,
    JointProfile,
    Scenario,
    UtilityFunction,
    UtilityValue,
    acceptable_to_all,
    argmax_set,
    first,
    prime_utility,
)


class Algorithm(str, Enum):
    NAIVE = "naive"
    LAZY = "lazy"
    FULL = "full"


@dataclass(frozen=True)
class StrategicGame:
    """Finite strategic game over per-agent action-tuple spaces."""

    agents: tuple[str, ...]
    strategy_spaces: tuple[tuple[ActionTuple, ...], ...]
    payoffs: tuple[UtilityFunction, ...]

    @staticmethod
    def from_scenario(scenario: Scenario, primed: bool = True) -> "StrategicGame":
        """Game whose payoffs are the scenario's utilities, restricted to
        acceptable profiles when ``primed`` is set."""
        if primed:
            payoffs = primed_utilities(scenario)
        else:
            payoffs = scenario.utilities
        return StrategicGame(scenario.agent_ids, scenario.strategy_spaces(), tuple(payoffs))

    def profiles(self) -> Iterator[JointProfile]:
        for combo in itertools.product(*self.strategy_spaces):
            yield JointProfile(combo)


def primed_utilities(scenario: Scenario) -> tuple[UtilityFunction, ...]:
    profiles = list(scenario.profiles())
    return tuple(
        prime_utility(u, scenario.acceptability, profiles) for u in scenario.utilities
    )


# ---------------------------------------------------------------------------
# Conflict detection
# ---------------------------------------------------------------------------


def has_common_optimum(
    us: Sequence[UtilityFunction], profiles: Iterable[JointProfile]
) -> bool:
    """True iff some profile maximizes every function at once.

    A conflict of interests exists exactly when this returns false.
    """
    if not us:
        raise EmpathicaError("has_common_optimum needs at least one utility function")
    profiles = list(profiles)
    common = argmax_set(us[0], profiles)
    for u in us[1:]:
        common &= argmax_set(u, profiles)
        if not common:
            return False
    return bool(common)


def pragmatic_conflict(
    u: UtilityFunction,
    accs: Iterable[AcceptabilityFunction],
    profiles: Iterable[JointProfile],
) -> bool:
    """True iff none of the agent's own maximizers is acceptable to all."""
    accs = tuple(accs)
    return not any(acceptable_to_all(accs, p) for p in argmax_set(u, profiles))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def aggregate(
    us: Sequence[UtilityFunction],
    mode: Aggregation,
    profiles: Iterable[JointProfile],
) -> UtilityFunction:
    """Pointwise shared-utility function; null factors are absorbing."""
    if not us:
        raise EmpathicaError("aggregate needs at least one utility function")
    table: dict[JointProfile, UtilityValue] = {}
    unit = UtilityValue(1.0) if mode is Aggregation.PRODUCT else UtilityValue(0.0)
    for p in profiles:
        combined = unit
        for u in us:
            v = u.evaluate(p)
            combined = combined.times(v) if mode is Aggregation.PRODUCT else combined.plus(v)
            if combined.is_null:
                break
        if not combined.is_null:
            table[p] = combined
    return UtilityFunction.direct(None, table)


# ---------------------------------------------------------------------------
# Decision algorithms
# ---------------------------------------------------------------------------


def determine_act_max(
    u: UtilityFunction,
    accs: Iterable[AcceptabilityFunction],
    profiles: Iterable[JointProfile],
) -> set[JointProfile]:
    """The agent's own maximizers that every acceptability function allows."""
    accs = tuple(accs)
    return {p for p in argmax_set(u, profiles) if acceptable_to_all(accs, p)}


def _shared_best(scenario: Scenario) -> JointProfile:
    """First profile maximizing the aggregated acceptability-restricted utility."""
    shared = aggregate(primed_utilities(scenario), scenario.aggregation, scenario.profiles())
    return first(argmax_set(shared, scenario.profiles()))


def _project(scenario: Scenario, agent_id: str, profile: JointProfile) -> ActionTuple:
    return profile.components[scenario.index_of(agent_id)]


def decide_naive(scenario: Scenario, agent_id: str) -> ActionTuple:
    """Self-maximize when some own maximizer is acceptable to everyone,
    else fall back to the shared maximum."""
    profiles = list(scenario.profiles())
    candidates = determine_act_max(
        scenario.utility_for(agent_id), scenario.acceptability, profiles
    )
    if candidates:
        return _project(scenario, agent_id, first(candidates))
    return _project(scenario, agent_id, _shared_best(scenario))


def _naive_joint(scenario: Scenario) -> JointProfile:
    return scenario.assemble({a: decide_naive(scenario, a) for a in scenario.agent_ids})


def determine_good_acts_max(
    scenario: Scenario,
    agent_id: str,
    acts_max: set[JointProfile],
) -> set[JointProfile]:
    """Keep the agent's acceptable maximizers only if everyone self-
    maximizing (the all-naive joint outcome) would still pay the agent at
    least its own maximum; otherwise nothing survives.

    The retention condition does not depend on the individual profile, so
    the result is ``acts_max`` unchanged or empty.
    """
    if not acts_max:
        return set()
    u = scenario.utility_for(agent_id)
    own_max = max(u.evaluate(p) for p in acts_max)
    outcome = u.evaluate(_naive_joint(scenario))
    if outcome.is_null or outcome < own_max:
        return set()
    return set(acts_max)


def decide_lazy(scenario: Scenario, agent_id: str) -> ActionTuple:
    """Self-maximize only when every agent keeps its acceptable maximizers
    under the all-naive outcome and the kept sets intersect; else shared."""
    profiles = list(scenario.profiles())
    good: dict[str, set[JointProfile]] = {}
    for other in scenario.agent_ids:
        acts_max = determine_act_max(
            scenario.utility_for(other), scenario.acceptability, profiles
        )
        good[other] = determine_good_acts_max(scenario, other, acts_max)
    intersection = functools.reduce(set.__and__, good.values())
    if intersection:
        return _project(scenario, agent_id, first(intersection))
    return _project(scenario, agent_id, _shared_best(scenario))


def enumerate_equilibria(game: StrategicGame) -> set[JointProfile]:
    """All pure-strategy equilibria of the game.

    A profile qualifies when every agent's payoff there is non-null and no
    unilateral replacement of that agent's tuple strictly improves it.
    Null deviation targets count as minus infinity and therefore never
    beat a non-null payoff.
    """
    equilibria: set[JointProfile] = set()
    for p in game.profiles():
        payoffs = [u.evaluate(p) for u in game.payoffs]
        if any(v.is_null for v in payoffs):
            continue
        stable = True
        for i, space in enumerate(game.strategy_spaces):
            current = payoffs[i]
            for alternative in space:
                if alternative == p.components[i]:
                    continue
                v = game.payoffs[i].evaluate(p.replace(i, alternative))
                if not v.is_null and v > current:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            equilibria.add(p)
    return equilibria


def _shared_max_equilibria(
    payoffs: Sequence[UtilityFunction], equilibria: set[JointProfile]
) -> set[JointProfile]:
    """Equilibria maximizing the product of the restricted utilities."""

    def product_at(p: JointProfile) -> UtilityValue:
        v = UtilityValue(1.0)
        for u in payoffs:
            v = v.times(u.evaluate(p))
        return v

    best: UtilityValue | None = None
    out: set[JointProfile] = set()
    for p in equilibria:
        v = product_at(p)
        if best is None or v > best:
            best = v
            out = {p}
        elif v == best:
            out.add(p)
    return out


def decide_full(scenario: Scenario, agent_id: str) -> ActionTuple:
    """Pick from the equilibria of the acceptability-restricted game,
    preferring maximal shared utility; without equilibria fall back to the
    shared maximum."""
    game = StrategicGame.from_scenario(scenario, primed=True)
    equilibria = enumerate_equilibria(game)
    if equilibria:
        chosen = first(_shared_max_equilibria(game.payoffs, equilibria))
        return _project(scenario, agent_id, chosen)
    return _project(scenario, agent_id, _shared_best(scenario))


_DECIDERS = {
    Algorithm.NAIVE: decide_naive,
    Algorithm.LAZY: decide_lazy,
    Algorithm.FULL: decide_full,
}


def decide(scenario: Scenario, agent_id: str, algorithm: Algorithm) -> ActionTuple:
    return _DECIDERS[Algorithm(algorithm)](scenario, agent_id)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecisionReport:
    """Everything one solver run produced, in canonical agent order."""

    assignment: dict[str, Algorithm]
    choices: dict[str, ActionTuple]
    joint: JointProfile
    utilities: dict[str, UtilityValue]
    conflict: bool
    pragmatic_conflicts: dict[str, bool]
    equilibria: frozenset[JointProfile] | None

    @property
    def algorithm(self) -> Algorithm | None:
        algos = set(self.assignment.values())
        return algos.pop() if len(algos) == 1 else None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DecisionReport):
            return NotImplemented
        return (
            self.assignment == other.assignment
            and self.choices == other.choices
            and self.joint == other.joint
            and self.utilities == other.utilities
            and self.conflict == other.conflict
            and self.pragmatic_conflicts == other.pragmatic_conflicts
            and self.equilibria == other.equilibria
        )

    def to_json_dict(self) -> dict:
        algo = self.algorithm
        return {
            "algorithm": algo.value if algo else None,
            "assignment": {a: algo.value for a, algo in self.assignment.items()},
            "choices": {a: list(t.actions) for a, t in self.choices.items()},
            "joint": [list(c.actions) for c in self.joint.components],
            "utilities": {a: v.to_json() for a, v in self.utilities.items()},
            "conflict": self.conflict,
            "pragmatic_conflicts": dict(self.pragmatic_conflicts),
            "equilibria": None
            if self.equilibria is None
            else [
                [list(c.actions) for c in p.components]
                for p in sorted(self.equilibria, key=lambda p: p.sort_key, reverse=True)
            ],
        }


def normalize_assignment(
    scenario: Scenario, algorithms: Algorithm | str | Mapping[str, Algorithm | str]
) -> dict[str, Algorithm]:
    """One algorithm per agent, in canonical order."""
    if isinstance(algorithms, (Algorithm, str)):
        algo = Algorithm(algorithms)
        return {a: algo for a in scenario.agent_ids}
    unknown = set(algorithms) - set(scenario.agent_ids)
    if unknown:
        raise EmpathicaError(f"assignment names unknown agents: {sorted(unknown)}")
    missing = set(scenario.agent_ids) - set(algorithms)
    if missing:
        raise EmpathicaError(f"assignment misses agents: {sorted(missing)}")
    return {a: Algorithm(algorithms[a]) for a in scenario.agent_ids}


def solve_scenario(
    scenario: Scenario, algorithms: Algorithm | str | Mapping[str, Algorithm | str]
) -> DecisionReport:
    """Run each agent's assigned algorithm and assemble the outcome.

    Realized utilities come from the raw (unrestricted) utility functions;
    the conflict flag is the absence of a common optimum; the equilibrium
    set is reported whenever some agent ran the full algorithm.
    """
    assignment = normalize_assignment(scenario, algorithms)
    profiles = list(scenario.profiles())
    choices = {a: decide(scenario, a, algo) for a, algo in assignment.items()}
    joint = scenario.assemble(choices)
    utilities = {a: scenario.utility_for(a).evaluate(joint) for a in scenario.agent_ids}
    conflict = not has_common_optimum(scenario.utilities, profiles)
    pragmatic = {
        a: pragmatic_conflict(scenario.utility_for(a), scenario.acceptability, profiles)
        for a in scenario.agent_ids
    }
    equilibria: frozenset[JointProfile] | None = None
    if Algorithm.FULL in assignment.values():
        equilibria = frozenset(
            enumerate_equilibria(StrategicGame.from_scenario(scenario, primed=True))
        )
    return DecisionReport(
        assignment=assignment,
        choices=choices,
        joint=joint,
        utilities=utilities,
        conflict=conflict,
        pragmatic_conflicts=pragmatic,
        equilibria=equilibria,
    )
