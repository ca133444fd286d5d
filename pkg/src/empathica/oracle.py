"""Brute-force re-derivation of every solver output, for verification.

This module deliberately avoids the engine's code paths: maximization is a
two-pass scan, the deterministic pick sorts the whole candidate list, and
equilibria come from per-agent best-response sets instead of deviation
loops. Slow and literal on purpose; the engine and this module must agree
on every scenario.
"""

from __future__ import annotations

import math
from typing import Sequence

from .core import (
    ActionTuple,
    Aggregation,
    EmpathicaError,
    JointProfile,
    NULL,
    NoFeasibleProfileError,
    Scenario,
    UtilityFunction,
    UtilityValue,
)
from .engine import Algorithm, DecisionReport, normalize_assignment


class EnumerationBoundExceeded(EmpathicaError):
    """The scenario's profile space is larger than the oracle will scan."""


DEFAULT_PROFILE_BOUND = 10**6


def _all_profiles(scenario: Scenario) -> list[JointProfile]:
    return list(scenario.profiles())


def _is_acceptable(scenario: Scenario, p: JointProfile) -> bool:
    for acc in scenario.acceptability:
        if acc.evaluate(p) is not True:
            return False
    return True


def _argmax(u: UtilityFunction, profiles: Sequence[JointProfile]) -> list[JointProfile]:
    best: UtilityValue | None = None
    for p in profiles:
        v = u.evaluate(p)
        if v.is_null:
            continue
        if best is None or v > best:
            best = v
    if best is None:
        raise NoFeasibleProfileError("all profiles are null")
    return [p for p in profiles if u.evaluate(p) == best]


def _first(profiles: Sequence[JointProfile]) -> JointProfile:
    ordered = sorted(profiles, key=lambda p: p.sort_key, reverse=True)
    if not ordered:
        raise EmpathicaError("empty candidate set")
    return ordered[0]


def _restricted_value(scenario: Scenario, agent_index: int, p: JointProfile) -> UtilityValue:
    """The agent's utility with unacceptable profiles forced to null."""
    if not _is_acceptable(scenario, p):
        return NULL
    return scenario.utilities[agent_index].evaluate(p)


def _shared_value(scenario: Scenario, p: JointProfile) -> UtilityValue:
    values = [
        _restricted_value(scenario, i, p) for i in range(len(scenario.agents))
    ]
    if any(v.is_null for v in values):
        return NULL
    if scenario.aggregation is Aggregation.SUM:
        total = 0.0
        for v in values:
            if math.isinf(total) and math.isinf(v.value) and (total > 0) != (v.value > 0):
                return NULL
            total = total + v.value
        return UtilityValue(total)
    product = 1.0
    for v in values:
        if product == 0.0 or v.value == 0.0:
            product = 0.0
        else:
            product = product * v.value
    return UtilityValue(product)


def _shared_best(scenario: Scenario, profiles: Sequence[JointProfile]) -> JointProfile:
    best: UtilityValue | None = None
    for p in profiles:
        v = _shared_value(scenario, p)
        if v.is_null:
            continue
        if best is None or v > best:
            best = v
    if best is None:
        raise NoFeasibleProfileError("shared utility is null everywhere")
    candidates = [p for p in profiles if _shared_value(scenario, p) == best]
    return _first(candidates)


def _acceptable_maximizers(
    scenario: Scenario, agent_index: int, profiles: Sequence[JointProfile]
) -> list[JointProfile]:
    u = scenario.utilities[agent_index]
    return [p for p in _argmax(u, profiles) if _is_acceptable(scenario, p)]


def _decide_naive(scenario: Scenario, agent_index: int, profiles: Sequence[JointProfile]) -> ActionTuple:
    candidates = _acceptable_maximizers(scenario, agent_index, profiles)
    if candidates:
        return _first(candidates).components[agent_index]
    return _shared_best(scenario, profiles).components[agent_index]


def _decide_lazy(scenario: Scenario, agent_index: int, profiles: Sequence[JointProfile]) -> ActionTuple:
    naive_joint = JointProfile(
        tuple(_decide_naive(scenario, i, profiles) for i in range(len(scenario.agents)))
    )
    kept: list[list[JointProfile]] = []
    for i in range(len(scenario.agents)):
        u = scenario.utilities[i]
        acts_max = _acceptable_maximizers(scenario, i, profiles)
        survivors = []
        for p in acts_max:
            outcome = u.evaluate(naive_joint)
            if not outcome.is_null and outcome >= u.evaluate(p):
                survivors.append(p)
        kept.append(survivors)
    common = [p for p in kept[0] if all(p in k for k in kept[1:])] if kept else []
    if common:
        return _first(common).components[agent_index]
    return _shared_best(scenario, profiles).components[agent_index]


def _best_responses(
    scenario: Scenario, agent_index: int, p: JointProfile
) -> list[ActionTuple]:
    """Tuples maximizing the agent's restricted utility against the rest of
    ``p``, with null outcomes ranked below every real value."""

    def rank(t: ActionTuple) -> float:
        v = _restricted_value(scenario, agent_index, p.replace(agent_index, t))
        return -math.inf if v.is_null else v.value

    space = scenario.agents[agent_index].tuples
    top = max(rank(t) for t in space)
    return [t for t in space if rank(t) == top]


def _equilibria(scenario: Scenario, profiles: Sequence[JointProfile]) -> set[JointProfile]:
    out: set[JointProfile] = set()
    for p in profiles:
        if any(
            _restricted_value(scenario, i, p).is_null for i in range(len(scenario.agents))
        ):
            continue
        if all(
            p.components[i] in _best_responses(scenario, i, p)
            for i in range(len(scenario.agents))
        ):
            out.add(p)
    return out


def _decide_full(scenario: Scenario, agent_index: int, profiles: Sequence[JointProfile]) -> ActionTuple:
    equilibria = _equilibria(scenario, profiles)
    if equilibria:
        def product_at(p: JointProfile) -> UtilityValue:
            v = UtilityValue(1.0)
            for i in range(len(scenario.agents)):
                v = v.times(_restricted_value(scenario, i, p))
            return v

        ranked = list(equilibria)
        best = product_at(ranked[0])
        for p in ranked[1:]:
            v = product_at(p)
            if v > best:
                best = v
        shared_max = [p for p in ranked if product_at(p) == best]
        return _first(shared_max).components[agent_index]
    return _shared_best(scenario, profiles).components[agent_index]


def oracle_equilibria(scenario: Scenario) -> set[JointProfile]:
    """Equilibria of the acceptability-restricted game via best responses."""
    return _equilibria(scenario, _all_profiles(scenario))


def brute_force_oracle(
    scenario: Scenario,
    algorithm: Algorithm | str,
    max_profiles: int = DEFAULT_PROFILE_BOUND,
) -> DecisionReport:
    """Recompute a homogeneous solver run by direct enumeration."""
    if scenario.profile_count > max_profiles:
        raise EnumerationBoundExceeded(
            f"scenario has {scenario.profile_count} profiles, bound is {max_profiles}"
        )
    algorithm = Algorithm(algorithm)
    profiles = _all_profiles(scenario)
    decider = {
        Algorithm.NAIVE: _decide_naive,
        Algorithm.LAZY: _decide_lazy,
        Algorithm.FULL: _decide_full,
    }[algorithm]

    choices = {
        scenario.agents[i].id: decider(scenario, i, profiles)
        for i in range(len(scenario.agents))
    }
    joint = JointProfile(tuple(choices[a.id] for a in scenario.agents))
    utilities = {
        a.id: scenario.utilities[i].evaluate(joint) for i, a in enumerate(scenario.agents)
    }

    common = _argmax(scenario.utilities[0], profiles)
    for i in range(1, len(scenario.agents)):
        own = _argmax(scenario.utilities[i], profiles)
        common = [p for p in common if p in own]
    conflict = not common

    pragmatic = {
        a.id: not _acceptable_maximizers(scenario, i, profiles)
        for i, a in enumerate(scenario.agents)
    }

    equilibria: frozenset[JointProfile] | None = None
    if algorithm is Algorithm.FULL:
        equilibria = frozenset(_equilibria(scenario, profiles))

    return DecisionReport(
        assignment=normalize_assignment(scenario, algorithm),
        choices=choices,
        joint=joint,
        utilities=utilities,
        conflict=conflict,
        pragmatic_conflicts=pragmatic,
        equilibria=equilibria,
    )
