"""Scenario file format, built-in scenarios, and a seeded generator.

Scenario documents are strict-schema JSON (suffix ``.scenario.json``).
Utility values are JSON numbers or the literals "-inf", "+inf", and null.
Serialization is canonical: keys sorted, entry lists in a fixed order,
floats in shortest round-trip form, so byte equality implies semantic
equality.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass

from .core import (
    AcceptabilityFunction,
    AcceptabilityRule,
    ActionTuple,
    AgentSpec,
    Aggregation,
    JointProfile,
    Scenario,
    ScenarioError,
    UtilityFunction,
    UtilityValue,
    validate_scenario,
)

SCENARIO_SUFFIX = ".scenario.json"
DOCUMENT_VERSION = 1


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def _require(condition: bool, code: str, message: str, location: str) -> None:
    if not condition:
        raise ScenarioError(code, message, location)


def _check_keys(obj: dict, required: set[str], optional: set[str], location: str) -> None:
    _require(isinstance(obj, dict), "schema", "expected an object", location)
    missing = required - set(obj)
    _require(not missing, "schema", f"missing keys: {sorted(missing)}", location)
    unknown = set(obj) - required - optional
    _require(not unknown, "schema", f"unknown keys: {sorted(unknown)}", location)


def _decode_names(data: object, location: str) -> list[str]:
    _require(
        isinstance(data, list) and all(isinstance(x, str) and x for x in data),
        "schema",
        "expected a list of non-empty strings",
        location,
    )
    _require(len(set(data)) == len(data), "schema", "duplicate names", location)
    return list(data)


def _decode_profile(agents: tuple[AgentSpec, ...], data: object, location: str) -> JointProfile:
    _require(isinstance(data, list), "schema", "profile must be a list of action lists", location)
    _require(
        len(data) == len(agents),
        "schema",
        f"profile has {len(data)} components, scenario has {len(agents)} agents",
        location,
    )
    components = []
    for i, (spec, part) in enumerate(zip(agents, data)):
        loc = f"{location}[{i}]"
        names = _decode_names(part, loc)
        _require(bool(names), "schema", "empty action tuple", loc)
        unknown = set(names) - set(spec.actions)
        _require(
            not unknown,
            "unknown_action",
            f"unknown actions for agent {spec.id!r}: {sorted(unknown)}",
            loc,
        )
        components.append(ActionTuple(spec.id, tuple(names)))
    return JointProfile(tuple(components))


def _decode_value(data: object, location: str) -> UtilityValue:
    try:
        return UtilityValue.from_json(data)
    except ValueError as exc:
        raise ScenarioError("schema", str(exc), location) from exc


def _decode_agents(data: object) -> tuple[AgentSpec, ...]:
    _require(isinstance(data, list) and data, "schema", "need a non-empty agent list", "$.agents")
    specs = []
    for i, entry in enumerate(data):
        loc = f"$.agents[{i}]"
        _check_keys(entry, {"id", "actions"}, {"tuples"}, loc)
        agent_id = entry["id"]
        _require(
            isinstance(agent_id, str) and bool(agent_id), "schema", "agent id must be non-empty", loc
        )
        actions = _decode_names(entry["actions"], f"{loc}.actions")
        tuples: tuple[ActionTuple, ...] = ()
        if "tuples" in entry:
            raw = entry["tuples"]
            _require(isinstance(raw, list) and raw, "schema", "tuples must be non-empty", f"{loc}.tuples")
            decoded = []
            for j, t in enumerate(raw):
                names = _decode_names(t, f"{loc}.tuples[{j}]")
                unknown = set(names) - set(actions)
                _require(
                    not unknown,
                    "unknown_action",
                    f"tuple uses undeclared actions {sorted(unknown)}",
                    f"{loc}.tuples[{j}]",
                )
                decoded.append(ActionTuple(agent_id, tuple(names)))
            _require(
                len(set(decoded)) == len(decoded), "schema", "duplicate tuples", f"{loc}.tuples"
            )
            tuples = tuple(decoded)
        specs.append(AgentSpec(agent_id, tuple(actions), tuples))
    return tuple(specs)


def _decode_utility(
    agents: tuple[AgentSpec, ...], entry: object, location: str
) -> UtilityFunction:
    _check_keys(entry, {"agent"}, {"table", "consequences", "quantification"}, location)
    agent = entry["agent"]
    direct = "table" in entry
    composed = "consequences" in entry or "quantification" in entry
    _require(
        direct != composed,
        "schema",
        "utility needs either a table or consequences plus quantification",
        location,
    )
    if direct:
        table: dict[JointProfile, UtilityValue] = {}
        raw = entry["table"]
        _require(isinstance(raw, list), "schema", "table must be a list", f"{location}.table")
        for j, row in enumerate(raw):
            loc = f"{location}.table[{j}]"
            _check_keys(row, {"profile", "value"}, set(), loc)
            p = _decode_profile(agents, row["profile"], f"{loc}.profile")
            _require(p not in table, "schema", f"duplicate profile {p}", loc)
            v = _decode_value(row["value"], f"{loc}.value")
            if not v.is_null:
                table[p] = v
        return UtilityFunction.direct(agent, table)

    _require(
        "consequences" in entry and "quantification" in entry,
        "schema",
        "composed utility needs both consequences and quantification",
        location,
    )
    consequences: dict[JointProfile, frozenset[str]] = {}
    raw = entry["consequences"]
    _require(isinstance(raw, list), "schema", "consequences must be a list", f"{location}.consequences")
    for j, row in enumerate(raw):
        loc = f"{location}.consequences[{j}]"
        _check_keys(row, {"profile", "atoms"}, set(), loc)
        p = _decode_profile(agents, row["profile"], f"{loc}.profile")
        _require(p not in consequences, "schema", f"duplicate profile {p}", loc)
        consequences[p] = frozenset(_decode_names(row["atoms"], f"{loc}.atoms"))
    quantification: dict[frozenset[str], UtilityValue] = {}
    raw = entry["quantification"]
    _require(
        isinstance(raw, list), "schema", "quantification must be a list", f"{location}.quantification"
    )
    for j, row in enumerate(raw):
        loc = f"{location}.quantification[{j}]"
        _check_keys(row, {"atoms", "value"}, set(), loc)
        atoms = frozenset(_decode_names(row["atoms"], f"{loc}.atoms"))
        _require(atoms not in quantification, "schema", "duplicate consequence set", loc)
        v = _decode_value(row["value"], f"{loc}.value")
        if not v.is_null:
            quantification[atoms] = v
    return UtilityFunction(agent=agent, consequences=consequences, quantification=quantification)


def _decode_rule(
    agents: tuple[AgentSpec, ...], entry: object, location: str
) -> AcceptabilityRule:
    _check_keys(entry, {"value"}, {"equals", "contains"}, location)
    raw_value = entry["value"]
    _require(
        raw_value is None or isinstance(raw_value, bool),
        "schema",
        "rule value must be true, false, or null",
        f"{location}.value",
    )
    has_equals = "equals" in entry
    has_contains = "contains" in entry
    _require(
        has_equals != has_contains,
        "schema",
        "rule needs exactly one of equals/contains",
        location,
    )
    if has_equals:
        profile = _decode_profile(agents, entry["equals"], f"{location}.equals")
        return AcceptabilityRule(value=raw_value, equals=profile)
    names = _decode_names(entry["contains"], f"{location}.contains")
    declared = {a for spec in agents for a in spec.actions}
    unknown = set(names) - declared
    _require(
        not unknown,
        "unknown_action",
        f"contains matcher uses undeclared actions {sorted(unknown)}",
        f"{location}.contains",
    )
    return AcceptabilityRule(value=raw_value, contains=frozenset(names))


def parse_scenario_document(doc: object, validate: bool = True) -> Scenario:
    """Build a Scenario from a decoded JSON document (strict schema)."""
    _check_keys(
        doc,
        {"version", "name", "agents", "utilities"},
        {"acceptability", "aggregation"},
        "$",
    )
    _require(
        doc["version"] == DOCUMENT_VERSION,
        "schema",
        f"unsupported version {doc['version']!r}",
        "$.version",
    )
    name = doc["name"]
    _require(isinstance(name, str) and bool(name), "schema", "name must be non-empty", "$.name")

    agents = _decode_agents(doc["agents"])
    ids = [a.id for a in agents]
    _require(len(set(ids)) == len(ids), "duplicate_agent", f"duplicate agent ids in {ids}", "$.agents")
    by_id = {a.id: a for a in agents}

    aggregation = Aggregation.PRODUCT
    if "aggregation" in doc:
        try:
            aggregation = Aggregation(doc["aggregation"])
        except ValueError:
            raise ScenarioError(
                "schema", f"aggregation must be one of product/sum", "$.aggregation"
            ) from None

    raw_utilities = doc["utilities"]
    _require(isinstance(raw_utilities, list), "schema", "utilities must be a list", "$.utilities")
    utilities_by_agent: dict[str, UtilityFunction] = {}
    for i, entry in enumerate(raw_utilities):
        loc = f"$.utilities[{i}]"
        u = _decode_utility(agents, entry, loc)
        _require(u.agent in by_id, "unknown_agent", f"unknown agent {u.agent!r}", loc)
        _require(u.agent not in utilities_by_agent, "schema", f"second utility for {u.agent!r}", loc)
        utilities_by_agent[u.agent] = u
    missing = set(ids) - set(utilities_by_agent)
    _require(not missing, "schema", f"agents without a utility: {sorted(missing)}", "$.utilities")

    acceptability_by_agent: dict[str, AcceptabilityFunction] = {}
    if "acceptability" in doc:
        raw_acc = doc["acceptability"]
        _require(isinstance(raw_acc, list), "schema", "acceptability must be a list", "$.acceptability")
        for i, entry in enumerate(raw_acc):
            loc = f"$.acceptability[{i}]"
            _check_keys(entry, {"agent", "rules"}, set(), loc)
            agent = entry["agent"]
            _require(agent in by_id, "unknown_agent", f"unknown agent {agent!r}", loc)
            _require(
                agent not in acceptability_by_agent, "schema", f"second entry for {agent!r}", loc
            )
            raw_rules = entry["rules"]
            _require(isinstance(raw_rules, list), "schema", "rules must be a list", f"{loc}.rules")
            rules = tuple(
                _decode_rule(agents, r, f"{loc}.rules[{j}]") for j, r in enumerate(raw_rules)
            )
            acceptability_by_agent[agent] = AcceptabilityFunction(agent, rules)

    scenario = Scenario(
        name=name,
        agents=agents,
        utilities=tuple(utilities_by_agent[a] for a in ids),
        acceptability=tuple(
            acceptability_by_agent.get(a, AcceptabilityFunction(a)) for a in ids
        ),
        aggregation=aggregation,
    )
    if validate:
        validate_scenario(scenario)
    return scenario


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document from JSON text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("schema", f"invalid JSON: {exc}", "$") from exc
    return parse_scenario_document(doc)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_profile(profile: JointProfile) -> list[list[str]]:
    return [list(c.actions) for c in profile.components]


def _encode_utility(u: UtilityFunction) -> dict:
    if u.is_direct:
        table = [
            {"profile": encode_profile(p), "value": v.to_json()}
            for p, v in sorted(u.table.items(), key=lambda kv: kv[0].sort_key)
            if not v.is_null
        ]
        return {"agent": u.agent, "table": table}
    consequences = [
        {"profile": encode_profile(p), "atoms": sorted(atoms)}
        for p, atoms in sorted(u.consequences.items(), key=lambda kv: kv[0].sort_key)
    ]
    quantification = [
        {"atoms": sorted(atoms), "value": v.to_json()}
        for atoms, v in sorted(u.quantification.items(), key=lambda kv: sorted(kv[0]))
        if not v.is_null
    ]
    return {"agent": u.agent, "consequences": consequences, "quantification": quantification}


def _encode_rule(rule: AcceptabilityRule) -> dict:
    out: dict = {"value": rule.value}
    if rule.equals is not None:
        out["equals"] = encode_profile(rule.equals)
    else:
        out["contains"] = sorted(rule.contains)
    return out


def encode_acceptability(acc: AcceptabilityFunction) -> dict:
    return {"agent": acc.agent, "rules": [_encode_rule(r) for r in acc.rules]}


def scenario_document(scenario: Scenario) -> dict:
    """The canonical document form of a scenario."""
    agents = []
    for spec in scenario.agents:
        entry: dict = {"id": spec.id, "actions": list(spec.actions)}
        if not spec.default_singletons:
            entry["tuples"] = [list(t.actions) for t in spec.tuples]
        agents.append(entry)
    doc: dict = {
        "version": DOCUMENT_VERSION,
        "name": scenario.name,
        "aggregation": scenario.aggregation.value,
        "agents": agents,
        "utilities": [_encode_utility(u) for u in scenario.utilities],
    }
    acceptability = [encode_acceptability(acc) for acc in scenario.acceptability if acc.rules]
    if acceptability:
        doc["acceptability"] = acceptability
    return doc


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical JSON text; equal scenarios serialize to equal bytes."""
    return json.dumps(scenario_document(scenario), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def spec_digest(scenario: Scenario) -> str:
    """Lowercase hex SHA-256 of the canonical serialization."""
    return hashlib.sha256(serialize_scenario(scenario).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------


def _profile(agents: tuple[AgentSpec, ...], *actions: str) -> JointProfile:
    return JointProfile(
        tuple(ActionTuple(spec.id, (a,)) for spec, a in zip(agents, actions))
    )


def _vehicles() -> Scenario:
    """Two vehicles at a bottleneck: drive or wait, crashing is out."""
    a = AgentSpec("A", ("drive_A", "wait_A"))
    b = AgentSpec("B", ("drive_B", "wait_B"))
    agents = (a, b)
    p = lambda x, y: _profile(agents, x, y)

    consequences_a = {
        p("drive_A", "drive_B"): {"crash"},
        p("drive_A", "wait_B"): {"wait 0"},
        p("wait_A", "wait_B"): {"wait ∞"},
        p("wait_A", "drive_B"): {"wait 10"},
    }
    quantification_a = {
        frozenset({"crash"}): UtilityValue(float("-inf")),
        frozenset({"wait 0"}): UtilityValue(1.0),
        frozenset({"wait 10"}): UtilityValue(0.9),
        frozenset({"wait ∞"}): UtilityValue(0.0),
    }
    consequences_b = {
        p("drive_A", "drive_B"): {"crash"},
        p("drive_A", "wait_B"): {"wait 20"},
        p("wait_A", "wait_B"): {"wait ∞"},
        p("wait_A", "drive_B"): {"wait 0"},
    }
    quantification_b = {
        frozenset({"crash"}): UtilityValue(float("-inf")),
        frozenset({"wait 0"}): UtilityValue(1.0),
        frozenset({"wait 20"}): UtilityValue(0.8),
        frozenset({"wait ∞"}): UtilityValue(0.0),
    }

    rules = (
        AcceptabilityRule(value=False, equals=p("drive_A", "drive_B")),
        AcceptabilityRule(value=False, contains=frozenset({"wait_A", "wait_B"})),
        AcceptabilityRule(value=None, contains=frozenset({"drive_A", "wait_A"})),
        AcceptabilityRule(value=None, contains=frozenset({"drive_B", "wait_B"})),
    )

    return Scenario(
        name="vehicles",
        agents=agents,
        utilities=(
            UtilityFunction.composed("A", consequences_a, quantification_a),
            UtilityFunction.composed("B", consequences_b, quantification_b),
        ),
        acceptability=(
            AcceptabilityFunction("A", rules),
            AcceptabilityFunction("B", rules),
        ),
    )


def _concert() -> Scenario:
    """Two concert-goers choosing among Bach, Stravinsky, and Mozart; one
    of them is banned from the Stravinsky venue."""
    a = AgentSpec("A", ("Bach_A", "Stravinsky_A", "Mozart_A"))
    b = AgentSpec("B", ("Bach_B", "Stravinsky_B", "Mozart_B"))
    agents = (a, b)
    p = lambda x, y: _profile(agents, x, y)

    table_a = {
        p("Bach_A", "Bach_B"): UtilityValue(6.0),
        p("Bach_A", "Stravinsky_B"): UtilityValue(1.0),
        p("Bach_A", "Mozart_B"): UtilityValue(1.0),
        p("Stravinsky_A", "Bach_B"): UtilityValue(4.0),
        p("Stravinsky_A", "Stravinsky_B"): UtilityValue(5.0),
        p("Stravinsky_A", "Mozart_B"): UtilityValue(4.0),
        p("Mozart_A", "Bach_B"): UtilityValue(1.0),
        p("Mozart_A", "Stravinsky_B"): UtilityValue(1.0),
        p("Mozart_A", "Mozart_B"): UtilityValue(3.0),
    }
    table_b = {
        p("Bach_A", "Bach_B"): UtilityValue(1.1),
        p("Bach_A", "Stravinsky_B"): UtilityValue(1.0),
        p("Bach_A", "Mozart_B"): UtilityValue(1.0),
        p("Stravinsky_A", "Bach_B"): UtilityValue(1.0),
        p("Stravinsky_A", "Stravinsky_B"): UtilityValue(2.0),
        p("Stravinsky_A", "Mozart_B"): UtilityValue(1.0),
        p("Mozart_A", "Bach_B"): UtilityValue(1.0),
        p("Mozart_A", "Stravinsky_B"): UtilityValue(1.0),
        p("Mozart_A", "Mozart_B"): UtilityValue(4.0),
    }

    rules = (AcceptabilityRule(value=False, contains=frozenset({"Stravinsky_A"})),)

    return Scenario(
        name="concert",
        agents=agents,
        utilities=(
            UtilityFunction.direct("A", table_a),
            UtilityFunction.direct("B", table_b),
        ),
        acceptability=(
            AcceptabilityFunction("A", rules),
            AcceptabilityFunction("B", rules),
        ),
    )


_BUILTINS = {"vehicles": _vehicles, "concert": _concert}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin(name: str) -> Scenario:
    """One of the packaged scenarios, validated."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ScenarioError(
            "unknown_builtin", f"unknown builtin {name!r}; available: {list(BUILTIN_NAMES)}"
        ) from None
    scenario = factory()
    validate_scenario(scenario)
    return scenario


# ---------------------------------------------------------------------------
# Random scenario generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs for the seeded generator; identical params give identical
    scenarios."""

    seed: int
    agent_count: int = 2
    actions_per_agent: int = 2
    value_range: tuple[float, float] = (0.0, 10.0)
    unacceptable_fraction: float = 0.0
    null_fraction: float = 0.0
    aggregation: Aggregation = Aggregation.PRODUCT

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.agent_count < 1 or self.actions_per_agent < 1:
            raise ValueError("need at least one agent and one action per agent")
        lo, hi = self.value_range
        if not lo <= hi:
            raise ValueError("value_range must be ordered")
        if not (0 <= self.unacceptable_fraction < 1 and 0 <= self.null_fraction < 1):
            raise ValueError("fractions must lie in [0, 1)")


def generate_random_scenario(params: GeneratorParams) -> Scenario:
    """A validated random scenario, deterministic in the params.

    Cells are dropped to null and profiles banned at the requested rates;
    if that leaves no profile that is acceptable and non-null for all
    agents, one deterministic profile is repaired.
    """
    rng = random.Random(params.seed)
    agents = tuple(
        AgentSpec(
            f"g{i}", tuple(f"g{i}_act{j}" for j in range(params.actions_per_agent))
        )
        for i in range(params.agent_count)
    )
    profiles = [
        JointProfile(combo) for combo in itertools.product(*(a.tuples for a in agents))
    ]
    lo, hi = params.value_range

    tables: list[dict[JointProfile, UtilityValue]] = []
    for _ in agents:
        table: dict[JointProfile, UtilityValue] = {}
        for p in profiles:
            if rng.random() < params.null_fraction:
                continue
            table[p] = UtilityValue(rng.uniform(lo, hi))
        tables.append(table)

    rules: list[list[AcceptabilityRule]] = [[] for _ in agents]
    for p in profiles:
        if rng.random() < params.unacceptable_fraction:
            owner = rng.randrange(params.agent_count)
            rules[owner].append(AcceptabilityRule(value=False, equals=p))

    def feasible(p: JointProfile) -> bool:
        return all(p in t for t in tables) and not any(
            r.equals == p for rs in rules for r in rs
        )

    if not any(feasible(p) for p in profiles):
        repair = profiles[rng.randrange(len(profiles))]
        for table in tables:
            if repair not in table:
                table[repair] = UtilityValue(rng.uniform(lo, hi))
        for rs in rules:
            rs[:] = [r for r in rs if r.equals != repair]

    scenario = Scenario(
        name=f"generated-{params.seed}",
        agents=agents,
        utilities=tuple(
            UtilityFunction.direct(a.id, t) for a, t in zip(agents, tables)
        ),
        acceptability=tuple(
            AcceptabilityFunction(a.id, tuple(rs)) for a, rs in zip(agents, rules)
        ),
        aggregation=params.aggregation,
    )
    validate_scenario(scenario)
    return scenario
