"""HTTP facade over the decision engine.

Request handlers are plain functions over pydantic models; the FastAPI app
wires them to routes and maps domain errors to structured HTTP errors. The
command-line client calls the same handlers in process or POSTs the same
models to a remote instance.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, model_validator

from . import engine, oracle, scenarios
from .core import EmpathicaError, Scenario, ScenarioError
from .engine import Algorithm

UtilityJson = float | str | None


class ErrorDetail(BaseModel):
    model_config = ConfigDict(extra="forbid")

    code: str
    location: str
    message: str


class ScenarioRef(BaseModel):
    """A scenario by builtin name or as a full inline document."""

    model_config = ConfigDict(extra="forbid")

    builtin: str | None = None
    document: dict | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "ScenarioRef":
        if (self.builtin is None) == (self.document is None):
            raise ValueError("give exactly one of builtin/document")
        return self

    def resolve(self) -> Scenario:
        if self.builtin is not None:
            return scenarios.builtin(self.builtin)
        return scenarios.parse_scenario_document(self.document)


class AssignmentSpec(BaseModel):
    """Either one algorithm for every agent or a per-agent mapping."""

    model_config = ConfigDict(extra="forbid")

    all: Algorithm | None = None
    agents: dict[str, Algorithm] | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "AssignmentSpec":
        if (self.all is None) == (self.agents is None):
            raise ValueError("give exactly one of all/agents")
        return self

    def resolve(self) -> Algorithm | dict[str, Algorithm]:
        return self.all if self.all is not None else dict(self.agents)


class ReportModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    algorithm: str | None
    assignment: dict[str, str]
    choices: dict[str, list[str]]
    joint: list[list[str]]
    utilities: dict[str, UtilityJson]
    conflict: bool
    pragmatic_conflicts: dict[str, bool]
    equilibria: list[list[list[str]]] | None

    @staticmethod
    def from_report(report: engine.DecisionReport) -> "ReportModel":
        return ReportModel.model_validate(report.to_json_dict())


class SolveRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioRef
    assignment: AssignmentSpec


class SolveResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    report: ReportModel


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioRef


class CompareResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    reports: dict[str, ReportModel]


class EquilibriaRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioRef
    primed: bool = False


class EquilibriaResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    primed: bool
    count: int
    equilibria: list[list[list[str]]]


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioRef
    algorithms: list[Algorithm] | None = None


class VerifyEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    algorithm: Algorithm
    matches: bool
    engine: ReportModel
    oracle: ReportModel


class VerifyResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    ok: bool
    results: list[VerifyEntry]


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    agent_count: int = 2
    actions_per_agent: int = 2
    value_min: float = 0.0
    value_max: float = 10.0
    unacceptable_fraction: float = 0.0
    null_fraction: float = 0.0

    def params(self) -> scenarios.GeneratorParams:
        return scenarios.GeneratorParams(
            seed=self.seed,
            agent_count=self.agent_count,
            actions_per_agent=self.actions_per_agent,
            value_range=(self.value_min, self.value_max),
            unacceptable_fraction=self.unacceptable_fraction,
            null_fraction=self.null_fraction,
        )


class GenerateResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    document: dict
    text: str


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    document: dict


class ValidateResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    valid: bool
    error: ErrorDetail | None = None


class BuiltinResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    document: dict
    digest: str


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


def handle_solve(request: SolveRequest) -> SolveResponse:
    scenario = request.scenario.resolve()
    report = engine.solve_scenario(scenario, request.assignment.resolve())
    return SolveResponse(scenario=scenario.name, report=ReportModel.from_report(report))


def handle_compare(request: CompareRequest) -> CompareResponse:
    scenario = request.scenario.resolve()
    reports = {
        algo.value: ReportModel.from_report(engine.solve_scenario(scenario, algo))
        for algo in Algorithm
    }
    return CompareResponse(scenario=scenario.name, reports=reports)


def handle_equilibria(request: EquilibriaRequest) -> EquilibriaResponse:
    scenario = request.scenario.resolve()
    game = engine.StrategicGame.from_scenario(scenario, primed=request.primed)
    found = engine.enumerate_equilibria(game)
    encoded = [
        scenarios.encode_profile(p)
        for p in sorted(found, key=lambda p: p.sort_key, reverse=True)
    ]
    return EquilibriaResponse(
        scenario=scenario.name, primed=request.primed, count=len(encoded), equilibria=encoded
    )


def handle_verify(request: VerifyRequest) -> VerifyResponse:
    scenario = request.scenario.resolve()
    algorithms = request.algorithms or list(Algorithm)
    results = []
    for algo in algorithms:
        engine_report = engine.solve_scenario(scenario, algo)
        oracle_report = oracle.brute_force_oracle(scenario, algo)
        results.append(
            VerifyEntry(
                algorithm=algo,
                matches=engine_report == oracle_report,
                engine=ReportModel.from_report(engine_report),
                oracle=ReportModel.from_report(oracle_report),
            )
        )
    return VerifyResponse(
        scenario=scenario.name, ok=all(r.matches for r in results), results=results
    )


def handle_generate(request: GenerateRequest) -> GenerateResponse:
    try:
        params = request.params()
    except ValueError as exc:
        raise ScenarioError("schema", str(exc)) from exc
    scenario = scenarios.generate_random_scenario(params)
    return GenerateResponse(
        name=scenario.name,
        document=scenarios.scenario_document(scenario),
        text=scenarios.serialize_scenario(scenario),
    )


def handle_validate(request: ValidateRequest) -> ValidateResponse:
    try:
        scenarios.parse_scenario_document(request.document)
    except ScenarioError as exc:
        return ValidateResponse(
            valid=False,
            error=ErrorDetail(code=exc.code, location=exc.location, message=exc.message),
        )
    return ValidateResponse(valid=True)


def handle_builtin(name: str) -> BuiltinResponse:
    scenario = scenarios.builtin(name)
    return BuiltinResponse(
        name=scenario.name,
        document=scenarios.scenario_document(scenario),
        digest=scenarios.spec_digest(scenario),
    )


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------


def create_app() -> FastAPI:
    app = FastAPI(title="empathica", version="0.1.0")

    @app.exception_handler(ScenarioError)
    async def scenario_error(_: Request, exc: ScenarioError) -> JSONResponse:
        detail = ErrorDetail(code=exc.code, location=exc.location, message=exc.message)
        return JSONResponse(status_code=422, content={"detail": detail.model_dump()})

    @app.exception_handler(EmpathicaError)
    async def domain_error(_: Request, exc: EmpathicaError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/scenarios/builtins")
    def builtins() -> dict:
        return {"names": list(scenarios.BUILTIN_NAMES)}

    @app.get("/scenarios/builtins/{name}", response_model=BuiltinResponse)
    def builtin_by_name(name: str) -> BuiltinResponse:
        return handle_builtin(name)

    @app.post("/scenarios/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        return handle_validate(request)

    @app.post("/scenarios/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        return handle_generate(request)

    @app.post("/solve", response_model=SolveResponse)
    def solve(request: SolveRequest) -> SolveResponse:
        return handle_solve(request)

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest) -> CompareResponse:
        return handle_compare(request)

    @app.post("/equilibria", response_model=EquilibriaResponse)
    def equilibria(request: EquilibriaRequest) -> EquilibriaResponse:
        return handle_equilibria(request)

    @app.post("/verify", response_model=VerifyResponse)
    def verify(request: VerifyRequest) -> VerifyResponse:
        return handle_verify(request)

    return app


app = create_app()
