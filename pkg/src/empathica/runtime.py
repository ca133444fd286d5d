"""Networked environment manager and agent clients.

The environment server owns one session: every expected agent registers
(with a digest of its scenario copy, which must match the server's),
announces its utility and acceptability functions for relay to the peers,
receives a start signal, commits an action tuple, and finally receives the
joint outcome with everyone's realized utility.

Wire protocol: TCP, one JSON object per line of UTF-8 text, mandatory
fields kind/session/sender, payload per kind. Commits are never relayed
before the outcome broadcast, so agents act simultaneously.
"""

from __future__ import annotations

import json
import os
import secrets
import socket
import threading
from dataclasses import dataclass, field
from enum import Enum

from .core import (
    ActionTuple,
    EmpathicaError,
    JointProfile,
    ProfileError,
    Scenario,
    UtilityValue,
)
from .engine import Algorithm, decide
from .scenarios import encode_acceptability, encode_profile, scenario_document, spec_digest

DEFAULT_PORT = 4780
PORT_ENV_VAR = "EMPATHICA_PORT"
DEFAULT_COMMIT_TIMEOUT = 10.0

_MAX_LINE = 4 * 1024 * 1024


def default_port() -> int:
    raw = os.environ.get(PORT_ENV_VAR)
    if raw is None:
        return DEFAULT_PORT
    try:
        return int(raw)
    except ValueError:
        raise EmpathicaError(f"{PORT_ENV_VAR} must be an integer, got {raw!r}") from None


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise EmpathicaError(f"endpoint must look like host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise EmpathicaError(f"bad port in endpoint {text!r}") from None


class ProtocolError(EmpathicaError):
    """A peer sent something the protocol does not allow here."""


class SessionAborted(EmpathicaError):
    """The server ended the session with a typed error message."""

    def __init__(self, code: str, text: str):
        super().__init__(f"session aborted: {code}: {text}")
        self.code = code
        self.text = text


class MessageKind(str, Enum):
    REGISTER = "register"
    REGISTER_ACK = "register_ack"
    ANNOUNCE = "announce"
    START = "start"
    COMMIT = "commit"
    OUTCOME = "outcome"
    ERROR = "error"
    BYE = "bye"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    session: str
    sender: str
    payload: dict

    def to_line(self) -> bytes:
        body = {
            "kind": self.kind.value,
            "session": self.session,
            "sender": self.sender,
            "payload": self.payload,
        }
        return (json.dumps(body, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")

    @staticmethod
    def from_line(line: bytes) -> "Message":
        try:
            body = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"unparseable message: {exc}") from exc
        if not isinstance(body, dict):
            raise ProtocolError("message must be a JSON object")
        missing = {"kind", "session", "sender"} - set(body)
        if missing:
            raise ProtocolError(f"message misses fields: {sorted(missing)}")
        try:
            kind = MessageKind(body["kind"])
        except ValueError:
            raise ProtocolError(f"unknown message kind {body['kind']!r}") from None
        payload = body.get("payload", {})
        if not isinstance(payload, dict):
            raise ProtocolError("payload must be an object")
        return Message(kind, str(body["session"]), str(body["sender"]), payload)


def announce_payload(scenario: Scenario, agent_id: str) -> dict:
    """The utility and acceptability tables an agent announces to peers."""
    doc = scenario_document(scenario)
    index = scenario.index_of(agent_id)
    return {
        "utility": doc["utilities"][index],
        "acceptability": encode_acceptability(scenario.acceptability[index]),
    }


def compute_rewards(scenario: Scenario, joint: JointProfile) -> dict[str, UtilityValue]:
    """Each agent's raw utility at the committed joint profile."""
    scenario.validate_profile(joint)
    return {a: scenario.utility_for(a).evaluate(joint) for a in scenario.agent_ids}


class Phase(str, Enum):
    AWAITING_REGISTRATION = "awaiting_registration"
    ANNOUNCING = "announcing"
    AWAITING_COMMITS = "awaiting_commits"
    COMPLETED = "completed"


@dataclass(frozen=True)
class SessionResult:
    """Terminal state of one served session."""

    joint: JointProfile | None = None
    utilities: dict[str, UtilityValue] | None = None
    error_code: str | None = None
    error_text: str | None = None

    @property
    def ok(self) -> bool:
        return self.error_code is None and self.joint is not None


class EnvironmentServer:
    """One-session environment and communications manager.

    Connection handlers mutate the session state under one lock; phase
    transitions re-arm a watchdog that aborts the session with a timeout
    error instead of hanging on a stalled client.
    """

    def __init__(
        self,
        scenario: Scenario,
        host: str = "127.0.0.1",
        port: int | None = None,
        commit_timeout: float = DEFAULT_COMMIT_TIMEOUT,
    ):
        self._scenario = scenario
        self._host = host
        self._port = default_port() if port is None else port
        self._timeout = commit_timeout
        self._digest = spec_digest(scenario)
        self._expected = set(scenario.agent_ids)
        self._session = secrets.token_hex(8)

        self._lock = threading.Lock()
        self._phase = Phase.AWAITING_REGISTRATION
        self._conns: dict[str, socket.socket] = {}
        self._announces: dict[str, dict] = {}
        self._commits: dict[str, ActionTuple] = {}
        self._result: SessionResult | None = None
        self._done = threading.Event()
        self._watchdog: threading.Timer | None = None
        self._generation = 0
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def __enter__(self) -> "EnvironmentServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen()
        self._listener = listener
        self._port = listener.getsockname()[1]
        self._arm_watchdog()
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    @property
    def endpoint(self) -> tuple[str, int]:
        return (self._host, self._port)

    @property
    def session_id(self) -> str:
        return self._session

    @property
    def registered(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(sorted(self._conns))

    def result(self, timeout: float | None = None) -> SessionResult:
        """Block until the session terminates and return its outcome."""
        if not self._done.wait(timeout):
            raise EmpathicaError("session did not terminate in time")
        assert self._result is not None
        return self._result

    def close(self) -> None:
        with self._lock:
            if self._result is None:
                self._finish_locked(SessionResult(error_code="closed", error_text="server closed"))

    # -- session machinery ---------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_connection(self, conn: socket.socket) -> None:
        agent_id: str | None = None
        reader = conn.makefile("rb")
        try:
            for line in reader:
                if len(line) > _MAX_LINE:
                    raise ProtocolError("message too large")
                try:
                    msg = Message.from_line(line.rstrip(b"\n"))
                except ProtocolError as exc:
                    with self._lock:
                        if agent_id is not None:
                            self._abort_locked("malformed_message", str(exc))
                        else:
                            self._send(conn, self._error_msg("malformed_message", str(exc)))
                    return
                agent_id = self._handle(conn, msg, agent_id)
                if agent_id is None:
                    return
        except (OSError, ValueError):
            pass
        finally:
            for closer in (reader.close, conn.close):
                try:
                    closer()
                except OSError:
                    pass

    def _handle(self, conn: socket.socket, msg: Message, agent_id: str | None) -> str | None:
        """Process one message; returns the connection's agent binding, or
        None when the connection should be dropped."""
        with self._lock:
            if self._phase is Phase.COMPLETED:
                return None
            if msg.kind is MessageKind.REGISTER:
                return self._on_register(conn, msg)
            if agent_id is None or msg.sender != agent_id:
                self._send(conn, self._error_msg("protocol_violation", "register first"))
                return None
            if msg.session != self._session:
                self._abort_locked("protocol_violation", f"bad session {msg.session!r}")
                return None
            if msg.kind is MessageKind.ANNOUNCE:
                return self._on_announce(conn, msg, agent_id)
            if msg.kind is MessageKind.COMMIT:
                return self._on_commit(conn, msg, agent_id)
            self._abort_locked(
                "protocol_violation", f"unexpected {msg.kind.value} from {agent_id}"
            )
            return None

    def _on_register(self, conn: socket.socket, msg: Message) -> str | None:
        payload = msg.payload
        agent_id = payload.get("agent_id")
        if agent_id != msg.sender or not isinstance(agent_id, str):
            self._send(conn, self._error_msg("malformed_message", "register sender mismatch"))
            return None
        if agent_id not in self._expected:
            self._send(conn, self._error_msg("unknown_agent", f"unknown agent {agent_id!r}"))
            return None
        if agent_id in self._conns:
            self._send(
                conn,
                self._error_msg("duplicate_registration", f"{agent_id!r} already registered"),
            )
            return None
        if self._phase is not Phase.AWAITING_REGISTRATION:
            self._send(conn, self._error_msg("protocol_violation", "registration closed"))
            return None
        if payload.get("spec_digest") != self._digest:
            self._send(conn, self._error_msg("spec_mismatch", "scenario digest differs"))
            self._abort_locked("spec_mismatch", f"digest mismatch from {agent_id!r}")
            return None
        self._conns[agent_id] = conn
        self._send(
            conn,
            Message(
                MessageKind.REGISTER_ACK,
                self._session,
                "server",
                {"agents": list(self._scenario.agent_ids)},
            ),
        )
        if set(self._conns) == self._expected:
            self._transition(Phase.ANNOUNCING)
            self._maybe_start_commits()
        return agent_id

    def _on_announce(self, conn: socket.socket, msg: Message, agent_id: str) -> str | None:
        if agent_id in self._announces:
            self._abort_locked("protocol_violation", f"second announce from {agent_id!r}")
            return None
        expected = announce_payload(self._scenario, agent_id)
        if msg.payload != expected:
            self._abort_locked(
                "spec_mismatch", f"announced functions of {agent_id!r} differ from the scenario"
            )
            return None
        self._announces[agent_id] = msg.payload
        self._maybe_start_commits()
        return agent_id

    def _maybe_start_commits(self) -> None:
        if self._phase is not Phase.ANNOUNCING or set(self._announces) != self._expected:
            return
        for sender in self._scenario.agent_ids:
            relay = Message(
                MessageKind.ANNOUNCE, self._session, sender, self._announces[sender]
            )
            for peer, peer_conn in self._conns.items():
                if peer != sender:
                    self._send(peer_conn, relay)
        start = Message(MessageKind.START, self._session, "server", {})
        for peer_conn in self._conns.values():
            self._send(peer_conn, start)
        self._transition(Phase.AWAITING_COMMITS)

    def _on_commit(self, conn: socket.socket, msg: Message, agent_id: str) -> str | None:
        if self._phase is not Phase.AWAITING_COMMITS:
            self._abort_locked("protocol_violation", "commit outside the commit phase")
            return None
        if agent_id in self._commits:
            self._abort_locked("duplicate_commit", f"second commit from {agent_id!r}")
            return None
        actions = msg.payload.get("actions")
        try:
            tup = ActionTuple(agent_id, tuple(actions))
        except (TypeError, ValueError):
            self._abort_locked("invalid_commit", f"unusable commit payload from {agent_id!r}")
            return None
        if tup not in self._scenario.agent(agent_id).tuples:
            self._abort_locked(
                "invalid_commit", f"{agent_id!r} committed {tup}, not in its strategy space"
            )
            return None
        self._commits[agent_id] = tup
        if set(self._commits) == self._expected:
            self._complete_locked()
        return agent_id

    def _complete_locked(self) -> None:
        joint = self._scenario.assemble(self._commits)
        utilities = compute_rewards(self._scenario, joint)
        outcome = Message(
            MessageKind.OUTCOME,
            self._session,
            "server",
            {
                "joint": encode_profile(joint),
                "utilities": {a: v.to_json() for a, v in utilities.items()},
            },
        )
        bye = Message(MessageKind.BYE, self._session, "server", {})
        for conn in self._conns.values():
            self._send(conn, outcome)
            self._send(conn, bye)
        self._finish_locked(SessionResult(joint=joint, utilities=utilities))

    def _abort_locked(self, code: str, text: str) -> None:
        if self._result is not None:
            return
        err = self._error_msg(code, text)
        for conn in self._conns.values():
            self._send(conn, err)
        self._finish_locked(SessionResult(error_code=code, error_text=text))

    def _finish_locked(self, result: SessionResult) -> None:
        self._phase = Phase.COMPLETED
        self._result = result
        if self._watchdog is not None:
            self._watchdog.cancel()
        for conn in self._conns.values():
            self._close_socket(conn)
        self._conns.clear()
        if self._listener is not None:
            self._close_socket(self._listener)
        self._done.set()

    def _transition(self, phase: Phase) -> None:
        self._phase = phase
        self._arm_watchdog()

    def _arm_watchdog(self) -> None:
        if self._watchdog is not None:
            self._watchdog.cancel()
        self._generation += 1
        generation = self._generation
        timer = threading.Timer(self._timeout, self._on_timeout, args=(generation,))
        timer.daemon = True
        timer.start()
        self._watchdog = timer

    def _on_timeout(self, generation: int) -> None:
        with self._lock:
            if self._generation != generation or self._phase is Phase.COMPLETED:
                return
            self._abort_locked("timeout", f"timed out in phase {self._phase.value}")

    def _error_msg(self, code: str, text: str) -> Message:
        return Message(MessageKind.ERROR, self._session, "server", {"code": code, "text": text})

    @staticmethod
    def _send(conn: socket.socket, msg: Message) -> None:
        try:
            conn.sendall(msg.to_line())
        except OSError:
            pass

    @staticmethod
    def _close_socket(sock: socket.socket) -> None:
        try:
            sock.close()
        except OSError:
            pass


def serve_environment(
    scenario: Scenario,
    endpoint: tuple[str, int] | None = None,
    commit_timeout: float = DEFAULT_COMMIT_TIMEOUT,
) -> SessionResult:
    """Serve one complete session and return its outcome."""
    host, port = endpoint if endpoint is not None else ("127.0.0.1", None)
    server = EnvironmentServer(scenario, host=host, port=port, commit_timeout=commit_timeout)
    with server:
        return server.result()


# ---------------------------------------------------------------------------
# Agent client
# ---------------------------------------------------------------------------


@dataclass
class _ClientState:
    session: str = ""
    peer_announces: dict[str, dict] = field(default_factory=dict)
    committed: ActionTuple | None = None
    joint: JointProfile | None = None
    utility: UtilityValue | None = None


def run_agent_client(
    endpoint: tuple[str, int],
    agent_id: str,
    algorithm: Algorithm | str,
    scenario: Scenario,
    timeout: float = DEFAULT_COMMIT_TIMEOUT,
) -> UtilityValue:
    """Play one session against the environment server.

    Registers with the digest of the local scenario copy, exchanges
    announces, decides with the requested algorithm, commits, and returns
    the utility reported in the outcome message.
    """
    algorithm = Algorithm(algorithm)
    state = _ClientState()
    with socket.create_connection(endpoint, timeout=timeout) as sock:
        sock.settimeout(timeout)
        reader = sock.makefile("rb")

        def send(kind: MessageKind, payload: dict) -> None:
            sock.sendall(Message(kind, state.session, agent_id, payload).to_line())

        def read() -> Message:
            try:
                line = reader.readline()
            except socket.timeout:
                raise ProtocolError("timed out waiting for the server") from None
            if not line:
                raise ProtocolError("connection closed by the server")
            return Message.from_line(line.rstrip(b"\n"))

        send(
            MessageKind.REGISTER,
            {
                "agent_id": agent_id,
                "algorithm": algorithm.value,
                "spec_digest": spec_digest(scenario),
            },
        )
        while True:
            msg = read()
            if msg.kind is MessageKind.ERROR:
                raise SessionAborted(
                    str(msg.payload.get("code", "unknown")),
                    str(msg.payload.get("text", "")),
                )
            if msg.kind is MessageKind.REGISTER_ACK:
                state.session = msg.session
                send(MessageKind.ANNOUNCE, announce_payload(scenario, agent_id))
            elif msg.kind is MessageKind.ANNOUNCE:
                state.peer_announces[msg.sender] = msg.payload
            elif msg.kind is MessageKind.START:
                state.committed = decide(scenario, agent_id, algorithm)
                send(MessageKind.COMMIT, {"actions": list(state.committed.actions)})
            elif msg.kind is MessageKind.OUTCOME:
                state.joint = _decode_outcome_profile(scenario, msg.payload)
                raw = msg.payload.get("utilities", {}).get(agent_id)
                state.utility = UtilityValue.from_json(raw)
            elif msg.kind is MessageKind.BYE:
                if state.utility is None:
                    raise ProtocolError("server said bye before any outcome")
                return state.utility
            else:
                raise ProtocolError(f"unexpected {msg.kind.value} from the server")


def _decode_outcome_profile(scenario: Scenario, payload: dict) -> JointProfile:
    raw = payload.get("joint")
    if not isinstance(raw, list) or len(raw) != len(scenario.agents):
        raise ProtocolError("outcome carries a malformed joint profile")
    try:
        profile = JointProfile(
            tuple(
                ActionTuple(spec.id, tuple(part))
                for spec, part in zip(scenario.agents, raw)
            )
        )
        scenario.validate_profile(profile)
    except (TypeError, ValueError, ProfileError) as exc:
        raise ProtocolError(f"outcome carries a malformed joint profile: {exc}") from exc
    return profile
