"""Domain model for acceptability-aware multi-agent decision problems.

Agents pick action tuples simultaneously; a joint profile (one tuple per
agent) maps to an extended-real utility per agent and to a true/false/null
acceptability verdict per agent. Everything here is immutable and pure.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence


class EmpathicaError(Exception):
    """Base class for all errors raised by this package."""


class ProfileError(EmpathicaError):
    """A joint profile is malformed for the scenario it is used with."""


class NoFeasibleProfileError(EmpathicaError):
    """Every profile in the candidate set evaluates to the null utility."""


class ScenarioError(EmpathicaError):
    """A scenario definition or document violates an invariant.

    ``code`` is a stable machine-readable tag; ``location`` points at the
    offending spot in a scenario document ("$" for the scenario as a whole).
    """

    def __init__(self, code: str, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.code = code
        self.location = location
        self.message = message


# ---------------------------------------------------------------------------
# Utility values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityValue:
    """Extended real with an explicit infeasible marker.

    ``value`` is None for the null variant (impossible or unacceptable
    profile), -inf/+inf for the infinite variants, and a finite float
    otherwise. Null never participates in ordering; comparing it raises.
    """

    value: float | None

    def __post_init__(self):
        if self.value is not None:
            v = float(self.value)
            if math.isnan(v):
                raise ValueError("utility value may not be NaN")
            object.__setattr__(self, "value", v)

    @staticmethod
    def finite(value: float) -> "UtilityValue":
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"not a finite value: {value!r}")
        return UtilityValue(v)

    @property
    def is_null(self) -> bool:
        return self.value is None

    @property
    def is_finite(self) -> bool:
        return self.value is not None and math.isfinite(self.value)

    def _ordered(self) -> float:
        if self.value is None:
            raise TypeError("null utility does not participate in ordering")
        return self.value

    def __lt__(self, other: "UtilityValue") -> bool:
        return self._ordered() < other._ordered()

    def __le__(self, other: "UtilityValue") -> bool:
        return self._ordered() <= other._ordered()

    def __gt__(self, other: "UtilityValue") -> bool:
        return self._ordered() > other._ordered()

    def __ge__(self, other: "UtilityValue") -> bool:
        return self._ordered() >= other._ordered()

    def times(self, other: "UtilityValue") -> "UtilityValue":
        """Extended-real product; null absorbs, and 0 * (+-inf) is 0."""
        if self.is_null or other.is_null:
            return NULL
        if self.value == 0.0 or other.value == 0.0:
            return UtilityValue(0.0)
        return UtilityValue(self.value * other.value)

    def plus(self, other: "UtilityValue") -> "UtilityValue":
        """Extended-real sum; null absorbs; opposing infinities yield null."""
        if self.is_null or other.is_null:
            return NULL
        a, b = self.value, other.value
        if math.isinf(a) and math.isinf(b) and (a > 0) != (b > 0):
            return NULL
        return UtilityValue(a + b)

    def to_json(self) -> float | str | None:
        """Encode as a JSON value: null, "-inf", "+inf", or a number."""
        if self.value is None:
            return None
        if self.value == math.inf:
            return "+inf"
        if self.value == -math.inf:
            return "-inf"
        return self.value

    @staticmethod
    def from_json(raw: object) -> "UtilityValue":
        if raw is None:
            return NULL
        if isinstance(raw, str):
            if raw == "-inf":
                return NEG_INF
            if raw == "+inf":
                return POS_INF
            raise ValueError(f"bad utility literal: {raw!r}")
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ValueError(f"bad utility value: {raw!r}")
        return UtilityValue.finite(raw)

    def __str__(self) -> str:
        j = self.to_json()
        return "null" if j is None else (j if isinstance(j, str) else repr(j))


NULL = UtilityValue(None)
NEG_INF = UtilityValue(-math.inf)
POS_INF = UtilityValue(math.inf)


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionTuple:
    """The actions one agent executes at the decision instant.

    Action names are stored sorted ascending and duplicate-free, so equal
    tuples compare and hash equal regardless of construction order.
    """

    owner: str
    actions: tuple[str, ...]

    def __post_init__(self):
        normalized = tuple(sorted(set(self.actions)))
        if not normalized or any(not a for a in normalized):
            raise ValueError("action tuple needs at least one non-empty action name")
        object.__setattr__(self, "actions", normalized)

    def __str__(self) -> str:
        return "+".join(self.actions)


@dataclass(frozen=True)
class JointProfile:
    """One action tuple per agent, in canonical agent order."""

    components: tuple[ActionTuple, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def all_actions(self) -> frozenset[str]:
        return frozenset(a for c in self.components for a in c.actions)

    @property
    def sort_key(self) -> tuple:
        """Key for deterministic selection: the profile's action names in
        agent order, compared lexicographically by code point. The nested
        shape is a secondary key so distinct profiles never tie."""
        flat = tuple(a for c in self.components for a in c.actions)
        nested = tuple(c.actions for c in self.components)
        return (flat, nested)

    def replace(self, index: int, component: ActionTuple) -> "JointProfile":
        parts = list(self.components)
        parts[index] = component
        return JointProfile(tuple(parts))

    def __str__(self) -> str:
        return "|".join(str(c) for c in self.components)


# ---------------------------------------------------------------------------
# Utility and acceptability functions
# ---------------------------------------------------------------------------


Consequences = frozenset[str]


@dataclass(frozen=True, eq=False)
class UtilityFunction:
    """Per-agent map from joint profiles to utility values.

    Direct mode stores the table outright; composed mode goes through a
    profile-to-consequences map and a consequences-to-value quantification.
    Entries absent from any stage evaluate to null. ``agent`` is None for
    aggregated shared-utility functions.
    """

    agent: str | None
    table: Mapping[JointProfile, UtilityValue] | None = None
    consequences: Mapping[JointProfile, Consequences] | None = None
    quantification: Mapping[Consequences, UtilityValue] | None = None

    def __post_init__(self):
        direct = self.table is not None
        composed = self.consequences is not None and self.quantification is not None
        if direct == composed:
            raise ValueError("utility function is either a table or a consequence pipeline")

    @staticmethod
    def direct(agent: str | None, table: Mapping[JointProfile, UtilityValue]) -> "UtilityFunction":
        return UtilityFunction(agent=agent, table=dict(table))

    @staticmethod
    def composed(
        agent: str,
        consequences: Mapping[JointProfile, Iterable[str]],
        quantification: Mapping[Iterable[str], UtilityValue],
    ) -> "UtilityFunction":
        return UtilityFunction(
            agent=agent,
            consequences={p: frozenset(c) for p, c in consequences.items()},
            quantification={frozenset(c): v for c, v in quantification.items()},
        )

    @property
    def is_direct(self) -> bool:
        return self.table is not None

    def evaluate(self, profile: JointProfile) -> UtilityValue:
        if self.table is not None:
            return self.table.get(profile, NULL)
        consqs = self.consequences.get(profile)
        if consqs is None:
            return NULL
        return self.quantification.get(consqs, NULL)

    def values(self) -> Iterator[UtilityValue]:
        """All values the function can produce (for validation sweeps)."""
        source = self.table if self.table is not None else self.quantification
        return iter(source.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UtilityFunction):
            return NotImplemented
        return (
            self.agent == other.agent
            and self.table == other.table
            and self.consequences == other.consequences
            and self.quantification == other.quantification
        )


@dataclass(frozen=True)
class AcceptabilityRule:
    """One piecewise branch of an acceptability function.

    Exactly one matcher is set: ``equals`` matches one joint profile,
    ``contains`` matches any profile whose action names are a superset.
    """

    value: bool | None
    equals: JointProfile | None = None
    contains: frozenset[str] | None = None

    def __post_init__(self):
        if (self.equals is None) == (self.contains is None):
            raise ValueError("rule needs exactly one of equals/contains")
        if self.contains is not None and not self.contains:
            raise ValueError("contains matcher may not be empty")

    def matches(self, profile: JointProfile) -> bool:
        if self.equals is not None:
            return profile == self.equals
        return self.contains <= profile.all_actions


@dataclass(frozen=True)
class AcceptabilityFunction:
    """First-match-wins rule list; profiles matching no rule are acceptable."""

    agent: str
    rules: tuple[AcceptabilityRule, ...] = ()

    def evaluate(self, profile: JointProfile) -> bool | None:
        for rule in self.rules:
            if rule.matches(profile):
                return rule.value
        return True


class Aggregation(str, Enum):
    PRODUCT = "product"
    SUM = "sum"


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    """One agent's identity, declared actions, and strategy space.

    When no explicit tuples are declared the strategy space is all
    singleton tuples over the declared actions.
    """

    id: str
    actions: tuple[str, ...]
    tuples: tuple[ActionTuple, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(sorted(set(self.actions))))
        if not self.tuples:
            object.__setattr__(
                self, "tuples", tuple(ActionTuple(self.id, (a,)) for a in self.actions)
            )
        else:
            ordered = tuple(sorted(set(self.tuples), key=lambda t: t.actions))
            object.__setattr__(self, "tuples", ordered)

    @property
    def default_singletons(self) -> bool:
        return self.tuples == tuple(ActionTuple(self.id, (a,)) for a in self.actions)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Agents, strategy spaces, utilities, and acceptability rules.

    ``agents`` order is canonical: component i of every joint profile
    belongs to ``agents[i]``. ``utilities`` and ``acceptability`` follow
    the same order.
    """

    name: str
    agents: tuple[AgentSpec, ...]
    utilities: tuple[UtilityFunction, ...]
    acceptability: tuple[AcceptabilityFunction, ...]
    aggregation: Aggregation = Aggregation.PRODUCT

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.agents)

    def index_of(self, agent_id: str) -> int:
        for i, a in enumerate(self.agents):
            if a.id == agent_id:
                return i
        raise ScenarioError("unknown_agent", f"no agent {agent_id!r} in scenario")

    def agent(self, agent_id: str) -> AgentSpec:
        return self.agents[self.index_of(agent_id)]

    def utility_for(self, agent_id: str) -> UtilityFunction:
        return self.utilities[self.index_of(agent_id)]

    def acceptability_for(self, agent_id: str) -> AcceptabilityFunction:
        return self.acceptability[self.index_of(agent_id)]

    def strategy_spaces(self) -> tuple[tuple[ActionTuple, ...], ...]:
        return tuple(a.tuples for a in self.agents)

    @property
    def profile_count(self) -> int:
        n = 1
        for a in self.agents:
            n *= len(a.tuples)
        return n

    def profiles(self) -> Iterator[JointProfile]:
        """All joint profiles of the strategy spaces, in deterministic order."""
        for combo in itertools.product(*(a.tuples for a in self.agents)):
            yield JointProfile(combo)

    def assemble(self, choices: Mapping[str, ActionTuple]) -> JointProfile:
        """Build the joint profile from one choice per agent."""
        missing = [a.id for a in self.agents if a.id not in choices]
        if missing:
            raise ProfileError(f"missing choices for agents: {missing}")
        return JointProfile(tuple(choices[a.id] for a in self.agents))

    def validate_profile(self, profile: JointProfile) -> None:
        """Raise ProfileError unless the profile fits this scenario."""
        if len(profile.components) != len(self.agents):
            raise ProfileError(
                f"profile has {len(profile.components)} components, "
                f"scenario has {len(self.agents)} agents"
            )
        for spec, component in zip(self.agents, profile.components):
            if component.owner != spec.id:
                raise ProfileError(
                    f"component owner {component.owner!r} does not match agent {spec.id!r}"
                )
            unknown = set(component.actions) - set(spec.actions)
            if unknown:
                raise ProfileError(
                    f"unknown actions for agent {spec.id!r}: {sorted(unknown)}"
                )


def validate_scenario(scenario: Scenario) -> None:
    """Load-time validation; raises ScenarioError on the first violation.

    Checks id uniqueness, per-agent function alignment, strategy-space
    membership of every tabulated profile, and the feasibility guarantee
    that some profile is non-null for every agent and acceptable to all.
    """
    if not scenario.agents:
        raise ScenarioError("schema", "scenario declares no agents", "$.agents")
    seen: set[str] = set()
    for i, spec in enumerate(scenario.agents):
        loc = f"$.agents[{i}]"
        if not spec.id:
            raise ScenarioError("schema", "agent id must be non-empty", loc)
        if spec.id in seen:
            raise ScenarioError("duplicate_agent", f"duplicate agent id {spec.id!r}", loc)
        seen.add(spec.id)
        if not spec.actions:
            raise ScenarioError("schema", f"agent {spec.id!r} declares no actions", loc)
        for t in spec.tuples:
            if t.owner != spec.id:
                raise ScenarioError(
                    "schema", f"tuple {t} not owned by agent {spec.id!r}", loc
                )
            unknown = set(t.actions) - set(spec.actions)
            if unknown:
                raise ScenarioError(
                    "unknown_action",
                    f"tuple {t} uses undeclared actions {sorted(unknown)}",
                    loc,
                )

    if len(scenario.utilities) != len(scenario.agents):
        raise ScenarioError("schema", "need exactly one utility function per agent", "$.utilities")
    if len(scenario.acceptability) != len(scenario.agents):
        raise ScenarioError(
            "schema", "need exactly one acceptability function per agent", "$.acceptability"
        )

    space = {p for p in scenario.profiles()}
    declared_actions = {a for spec in scenario.agents for a in spec.actions}

    for i, (spec, u) in enumerate(zip(scenario.agents, scenario.utilities)):
        loc = f"$.utilities[{i}]"
        if u.agent != spec.id:
            raise ScenarioError(
                "schema", f"utility {i} belongs to {u.agent!r}, expected {spec.id!r}", loc
            )
        keyed = u.table if u.table is not None else u.consequences
        for p in keyed:
            _check_member(scenario, space, p, loc)

    for i, (spec, acc) in enumerate(zip(scenario.agents, scenario.acceptability)):
        loc = f"$.acceptability[{i}]"
        if acc.agent != spec.id:
            raise ScenarioError(
                "schema", f"acceptability {i} belongs to {acc.agent!r}, expected {spec.id!r}", loc
            )
        for j, rule in enumerate(acc.rules):
            if rule.equals is not None:
                _check_member(scenario, space, rule.equals, f"{loc}.rules[{j}]")
            else:
                unknown = set(rule.contains) - declared_actions
                if unknown:
                    raise ScenarioError(
                        "unknown_action",
                        f"contains matcher uses undeclared actions {sorted(unknown)}",
                        f"{loc}.rules[{j}]",
                    )

    feasible = any(
        all(not u.evaluate(p).is_null for u in scenario.utilities)
        and all(acc.evaluate(p) is True for acc in scenario.acceptability)
        for p in scenario.profiles()
    )
    if not feasible:
        raise ScenarioError(
            "no_feasible_profile",
            "no profile is both non-null for every agent and acceptable to all",
        )

    if scenario.aggregation is Aggregation.PRODUCT:
        negative = any(
            v.is_finite and v.value < 0 for u in scenario.utilities for v in u.values()
        )
        if negative:
            warnings.warn(
                f"scenario {scenario.name!r}: product aggregation over negative utilities "
                "is not order-preserving",
                stacklevel=2,
            )


def _check_member(
    scenario: Scenario, space: set[JointProfile], profile: JointProfile, location: str
) -> None:
    try:
        scenario.validate_profile(profile)
    except ProfileError as exc:
        raise ScenarioError("unknown_action", str(exc), location) from exc
    if profile not in space:
        raise ScenarioError(
            "unknown_action",
            f"profile {profile} is outside the declared strategy space",
            location,
        )


def make_profile(scenario: Scenario, actions_per_agent: Sequence[Sequence[str]]) -> JointProfile:
    """Convenience constructor from raw action names, validated."""
    if len(actions_per_agent) != len(scenario.agents):
        raise ProfileError(
            f"expected {len(scenario.agents)} components, got {len(actions_per_agent)}"
        )
    profile = JointProfile(
        tuple(
            ActionTuple(spec.id, tuple(actions))
            for spec, actions in zip(scenario.agents, actions_per_agent)
        )
    )
    scenario.validate_profile(profile)
    return profile


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def evaluate_utility(u: UtilityFunction, profile: JointProfile) -> UtilityValue:
    return u.evaluate(profile)


def evaluate_acceptability(acc: AcceptabilityFunction, profile: JointProfile) -> bool | None:
    return acc.evaluate(profile)


def acceptable_to_all(
    accs: Iterable[AcceptabilityFunction], profile: JointProfile
) -> bool:
    return all(acc.evaluate(profile) is True for acc in accs)


def prime_utility(
    u: UtilityFunction,
    accs: Iterable[AcceptabilityFunction],
    profiles: Iterable[JointProfile],
) -> UtilityFunction:
    """Materialize the acceptability-restricted copy of ``u``.

    The result is a direct-mode function over ``profiles`` that keeps the
    original value wherever every acceptability function returns true and
    is null everywhere else.
    """
    accs = tuple(accs)
    table: dict[JointProfile, UtilityValue] = {}
    for p in profiles:
        if acceptable_to_all(accs, p):
            v = u.evaluate(p)
            if not v.is_null:
                table[p] = v
    return UtilityFunction.direct(u.agent, table)


def argmax_set(u: UtilityFunction, profiles: Iterable[JointProfile]) -> set[JointProfile]:
    """Profiles attaining the maximal non-null value of ``u``.

    Null-valued profiles never enter the candidate set; if everything is
    null the maximization has no answer and NoFeasibleProfileError is
    raised.
    """
    best: UtilityValue | None = None
    out: list[JointProfile] = []
    for p in profiles:
        v = u.evaluate(p)
        if v.is_null:
            continue
        if best is None or v > best:
            best = v
            out = [p]
        elif v == best:
            out.append(p)
    if best is None:
        raise NoFeasibleProfileError(
            f"utility of agent {u.agent!r} is null on every candidate profile"
        )
    return set(out)


def first(profiles: Iterable[JointProfile]) -> JointProfile:
    """Deterministic pick: sort keys in decreasing order, take the first.

    Keys are the profiles' action-name sequences compared by code point,
    so the selection is independent of set iteration order.
    """
    chosen: JointProfile | None = None
    for p in profiles:
        if chosen is None or p.sort_key > chosen.sort_key:
            chosen = p
    if chosen is None:
        raise EmpathicaError("first() needs a non-empty profile set")
    return chosen
