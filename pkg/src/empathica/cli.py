"""Command-line client for the decision engine and the networked runtime.

Compute commands (solve, compare, equilibria, verify, gen) build the same
request models the HTTP service accepts and run them in process, or against
a remote service when --api is given. serve and agent drive the TCP runtime
directly. Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from . import runtime, scenarios, service
from .core import EmpathicaError, ScenarioError
from .engine import Algorithm

ALGORITHM_NAMES = [a.value for a in Algorithm]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _value_token(v: float | str | None) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return v
    return repr(float(v))


def _profile_token(profile: list[list[str]]) -> str:
    return "|".join("+".join(component) for component in profile)


def report_lines(scenario_name: str, report: service.ReportModel) -> list[str]:
    """Stable machine-readable form of one decision report."""
    lines = [f"scenario {scenario_name}"]
    for agent, algo in report.assignment.items():
        lines.append(f"assign {agent} {algo}")
    for agent, tup in report.choices.items():
        lines.append(f"choice {agent} {'+'.join(tup)}")
    lines.append(f"joint {_profile_token(report.joint)}")
    for agent, value in report.utilities.items():
        lines.append(f"utility {agent} {_value_token(value)}")
    for agent, flag in report.pragmatic_conflicts.items():
        lines.append(f"pragmatic {agent} {str(flag).lower()}")
    lines.append(f"conflict {str(report.conflict).lower()}")
    if report.equilibria is not None:
        lines.append(f"equilibria {len(report.equilibria)}")
        for p in report.equilibria:
            lines.append(f"equilibrium {_profile_token(p)}")
    return lines


def _report_human(report: service.ReportModel) -> list[str]:
    algo = report.algorithm or "mixed"
    lines = [f"assignment: {algo}" if report.algorithm else "assignment: per agent"]
    if not report.algorithm:
        for agent, a in report.assignment.items():
            lines.append(f"  {agent}: {a}")
    lines.append("decisions:")
    for agent, tup in report.choices.items():
        lines.append(f"  {agent} -> {'+'.join(tup)}")
    lines.append(f"joint profile: {_profile_token(report.joint)}")
    lines.append("realized utilities:")
    for agent, value in report.utilities.items():
        lines.append(f"  {agent}: {_value_token(value)}")
    lines.append(f"conflict of interests: {'yes' if report.conflict else 'no'}")
    pragmatic = ", ".join(
        f"{agent}={'yes' if flag else 'no'}"
        for agent, flag in report.pragmatic_conflicts.items()
    )
    lines.append(f"pragmatic conflicts: {pragmatic}")
    if report.equilibria is not None:
        if report.equilibria:
            listed = ", ".join(_profile_token(p) for p in report.equilibria)
            lines.append(f"equilibria ({len(report.equilibria)}): {listed}")
        else:
            lines.append("equilibria (0): none")
    return lines


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _post(api: str, path: str, request, response_type):
    url = api.rstrip("/") + path
    try:
        response = httpx.post(url, json=request.model_dump(mode="json"), timeout=60.0)
    except httpx.HTTPError as exc:
        raise EmpathicaError(f"cannot reach {url}: {exc}") from exc
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail")
        except ValueError:
            detail = response.text
        raise EmpathicaError(f"{url} answered {response.status_code}: {detail}")
    return response_type.model_validate(response.json())


def _scenario_ref(args, parser: argparse.ArgumentParser) -> service.ScenarioRef:
    path = getattr(args, "scenario", None)
    builtin = getattr(args, "builtin", None)
    if (path is None) == (builtin is None):
        parser.error("give exactly one scenario source: a file path or --builtin NAME")
    if builtin is not None:
        return service.ScenarioRef(builtin=builtin)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise EmpathicaError(f"cannot read scenario file: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("schema", f"invalid JSON in {path}: {exc}") from exc
    return service.ScenarioRef(document=document)


def _parse_agent_algo(pair: str) -> tuple[str, Algorithm]:
    agent, sep, algo = pair.partition("=")
    if not sep or not agent or algo not in ALGORITHM_NAMES:
        raise argparse.ArgumentTypeError(
            f"expected ID=<{'|'.join(ALGORITHM_NAMES)}>, got {pair!r}"
        )
    return agent, Algorithm(algo)


def _assignment(args, parser: argparse.ArgumentParser) -> service.AssignmentSpec:
    per_agent = getattr(args, "agent", None)
    if args.all is not None and per_agent:
        parser.error("--all and --agent are mutually exclusive")
    if per_agent:
        return service.AssignmentSpec(agents=dict(per_agent))
    return service.AssignmentSpec(all=Algorithm(args.all or "full"))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(args, parser) -> int:
    request = service.SolveRequest(
        scenario=_scenario_ref(args, parser), assignment=_assignment(args, parser)
    )
    if args.api:
        response = _post(args.api, "/solve", request, service.SolveResponse)
    else:
        response = service.handle_solve(request)
    if args.format == "lines":
        print("\n".join(report_lines(response.scenario, response.report)))
    else:
        print(f"scenario: {response.scenario}")
        print("\n".join(_report_human(response.report)))
    return 0


def cmd_compare(args, parser) -> int:
    request = service.CompareRequest(scenario=_scenario_ref(args, parser))
    if args.api:
        response = _post(args.api, "/compare", request, service.CompareResponse)
    else:
        response = service.handle_compare(request)
    if args.format == "lines":
        out = [f"scenario {response.scenario}"]
        for algo in ALGORITHM_NAMES:
            for line in report_lines(response.scenario, response.reports[algo])[1:]:
                out.append(f"{algo} {line}")
        print("\n".join(out))
        return 0
    print(f"scenario: {response.scenario}")
    rows = [("algorithm", "joint", "utilities")]
    for algo in ALGORITHM_NAMES:
        report = response.reports[algo]
        utilities = " ".join(
            f"{a}={_value_token(v)}" for a, v in report.utilities.items()
        )
        rows.append((algo, _profile_token(report.joint), utilities))
    width_a = max(len(r[0]) for r in rows)
    width_j = max(len(r[1]) for r in rows)
    for algo, joint, utilities in rows:
        print(f"{algo:<{width_a}}  {joint:<{width_j}}  {utilities}")
    return 0


def cmd_equilibria(args, parser) -> int:
    request = service.EquilibriaRequest(
        scenario=_scenario_ref(args, parser), primed=args.primed
    )
    if args.api:
        response = _post(args.api, "/equilibria", request, service.EquilibriaResponse)
    else:
        response = service.handle_equilibria(request)
    if args.format == "lines":
        out = [
            f"scenario {response.scenario}",
            f"primed {str(response.primed).lower()}",
            f"equilibria {response.count}",
        ]
        out += [f"equilibrium {_profile_token(p)}" for p in response.equilibria]
        print("\n".join(out))
        return 0
    kind = "acceptability-restricted" if response.primed else "raw"
    print(f"scenario: {response.scenario}")
    print(f"{response.count} pure-strategy equilibria of the {kind} game")
    for p in response.equilibria:
        print(f"  {_profile_token(p)}")
    return 0


def cmd_verify(args, parser) -> int:
    algorithms = [Algorithm(args.all)] if args.all else None
    request = service.VerifyRequest(
        scenario=_scenario_ref(args, parser), algorithms=algorithms
    )
    if args.api:
        response = _post(args.api, "/verify", request, service.VerifyResponse)
    else:
        response = service.handle_verify(request)
    for entry in response.results:
        status = "ok" if entry.matches else "MISMATCH"
        print(f"verify {entry.algorithm.value} {status}")
        if not entry.matches:
            print("  engine: " + " / ".join(report_lines(response.scenario, entry.engine)[1:]))
            print("  oracle: " + " / ".join(report_lines(response.scenario, entry.oracle)[1:]))
    return 0 if response.ok else 1


def cmd_gen(args, parser) -> int:
    request = service.GenerateRequest(
        seed=args.seed,
        agent_count=args.agents,
        actions_per_agent=args.actions,
        value_min=args.value_min,
        value_max=args.value_max,
        unacceptable_fraction=args.unacceptable_fraction,
        null_fraction=args.null_fraction,
    )
    if args.api:
        response = _post(args.api, "/scenarios/generate", request, service.GenerateResponse)
    else:
        response = service.handle_generate(request)
    if args.out:
        Path(args.out).write_text(response.text, encoding="utf-8")
        print(f"wrote {response.name} to {args.out}")
    else:
        sys.stdout.write(response.text)
    return 0


def _endpoint(args) -> tuple[str, int]:
    if args.endpoint:
        return runtime.parse_endpoint(args.endpoint)
    return ("127.0.0.1", runtime.default_port())


def cmd_serve(args, parser) -> int:
    scenario = _scenario_ref(args, parser).resolve()
    host, port = _endpoint(args)
    server = runtime.EnvironmentServer(
        scenario, host=host, port=port, commit_timeout=args.timeout_secs
    )
    with server:
        bound_host, bound_port = server.endpoint
        print(f"serving {scenario.name} on {bound_host}:{bound_port}", flush=True)
        result = server.result()
    if not result.ok:
        print(f"session failed: {result.error_code}: {result.error_text}", file=sys.stderr)
        return 1
    print(f"outcome {_profile_token([list(c.actions) for c in result.joint.components])}")
    for agent, value in result.utilities.items():
        print(f"utility {agent} {_value_token(value.to_json())}")
    return 0


def cmd_agent(args, parser) -> int:
    scenario = _scenario_ref(args, parser).resolve()
    if not args.agent or len(args.agent) != 1:
        parser.error("give exactly one --agent ID=ALGO")
    agent_id, algorithm = args.agent[0]
    value = runtime.run_agent_client(
        _endpoint(args), agent_id, algorithm, scenario, timeout=args.timeout_secs
    )
    print(f"agent {agent_id} utility {_value_token(value.to_json())}")
    return 0


def cmd_api(args, parser) -> int:
    import uvicorn

    uvicorn.run(service.create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_scenario_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", nargs="?", help="path to a .scenario.json file")
    p.add_argument("--builtin", metavar="NAME", help=f"one of {', '.join(scenarios.BUILTIN_NAMES)}")


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--format", choices=["human", "lines"], default="human",
        help="human prose or stable machine-readable lines",
    )


def _add_api(p: argparse.ArgumentParser) -> None:
    p.add_argument("--api", metavar="URL", help="run against a remote service instead of in process")


def _add_assignment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--all", choices=ALGORITHM_NAMES, help="one algorithm for every agent")
    p.add_argument(
        "--agent", action="append", type=_parse_agent_algo, metavar="ID=ALGO",
        help="per-agent algorithm, repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="empathica",
        description="Solve, compare, verify, generate, and serve multi-agent decision scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one algorithm assignment and print the report")
    _add_scenario_source(p)
    _add_assignment(p)
    _add_format(p)
    _add_api(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="run naive, lazy, and full side by side")
    _add_scenario_source(p)
    _add_format(p)
    _add_api(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("equilibria", help="enumerate pure-strategy equilibria")
    _add_scenario_source(p)
    p.add_argument(
        "--primed", action="store_true",
        help="use acceptability-restricted utilities instead of raw ones",
    )
    _add_format(p)
    _add_api(p)
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("verify", help="check the engine against the brute-force oracle")
    _add_scenario_source(p)
    p.add_argument("--all", choices=ALGORITHM_NAMES, help="verify only this algorithm")
    _add_api(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate a random scenario deterministically")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--value-min", type=float, default=0.0)
    p.add_argument("--value-max", type=float, default=10.0)
    p.add_argument("--unacceptable-fraction", type=float, default=0.0)
    p.add_argument("--null-fraction", type=float, default=0.0)
    p.add_argument("--out", metavar="PATH", help="write the document here instead of stdout")
    _add_api(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("serve", help="run the environment server for one session")
    _add_scenario_source(p)
    p.add_argument("--endpoint", metavar="HOST:PORT", help="bind address (default port 4780 or $EMPATHICA_PORT)")
    p.add_argument("--timeout-secs", type=float, default=runtime.DEFAULT_COMMIT_TIMEOUT)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agent", help="join a served session as one agent")
    _add_scenario_source(p)
    p.add_argument(
        "--agent", action="append", type=_parse_agent_algo, metavar="ID=ALGO", required=True,
        help="which agent to play and with which algorithm",
    )
    p.add_argument("--endpoint", metavar="HOST:PORT", help="server address (default port 4780 or $EMPATHICA_PORT)")
    p.add_argument("--timeout-secs", type=float, default=runtime.DEFAULT_COMMIT_TIMEOUT)
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("api", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_api)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except runtime.SessionAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EmpathicaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
