import socket
import threading
import time

import pytest

from empathica.core import NEG_INF, NULL, EmpathicaError, ProfileError, UtilityValue
from empathica.engine import Algorithm, solve_scenario
from empathica.runtime import (
    DEFAULT_PORT,
    EnvironmentServer,
    Message,
    MessageKind,
    ProtocolError,
    SessionAborted,
    announce_payload,
    compute_rewards,
    default_port,
    parse_endpoint,
    run_agent_client,
    serve_environment,
)
from empathica.scenarios import parse_scenario_document, scenario_document, spec_digest

from conftest import build_game, profile_of

TIMEOUT = 5.0


# ---------------------------------------------------------------------------
# Protocol plumbing
# ---------------------------------------------------------------------------


class TestMessages:
    def test_round_trip_is_single_line(self):
        msg = Message(MessageKind.COMMIT, "s1", "A", {"actions": ["wait_A"], "note": "∞"})
        line = msg.to_line()
        assert line.endswith(b"\n") and line.count(b"\n") == 1
        assert Message.from_line(line.rstrip(b"\n")) == msg

    @pytest.mark.parametrize(
        "line",
        [b"not json", b"[1,2]", b'{"kind":"register"}', b'{"kind":"nope","session":"","sender":"A"}'],
    )
    def test_malformed_lines_raise(self, line):
        with pytest.raises(ProtocolError):
            Message.from_line(line)

    def test_parse_endpoint(self):
        assert parse_endpoint("localhost:4780") == ("localhost", 4780)
        with pytest.raises(EmpathicaError):
            parse_endpoint("no-port")
        with pytest.raises(EmpathicaError):
            parse_endpoint("host:abc")

    def test_default_port_env_override(self, monkeypatch):
        monkeypatch.delenv("EMPATHICA_PORT", raising=False)
        assert default_port() == DEFAULT_PORT == 4780
        monkeypatch.setenv("EMPATHICA_PORT", "5123")
        assert default_port() == 5123
        monkeypatch.setenv("EMPATHICA_PORT", "zzz")
        with pytest.raises(EmpathicaError):
            default_port()


def test_compute_rewards(vehicles, concert):
    rewards = compute_rewards(vehicles, profile_of(vehicles, "drive_A", "wait_B"))
    assert rewards == {"A": UtilityValue(1.0), "B": UtilityValue(0.8)}
    rewards = compute_rewards(concert, profile_of(concert, "Bach_A", "Mozart_B"))
    assert rewards == {"A": UtilityValue(1.0), "B": UtilityValue(1.0)}


def test_compute_rewards_passes_null_through():
    scenario = build_game(
        {"A": ["l", "r"], "B": ["x"]},
        {"A": {("l", "x"): 1.0}, "B": {("l", "x"): 1.0, ("r", "x"): 2.0}},
    )
    rewards = compute_rewards(scenario, profile_of(scenario, "r", "x"))
    assert rewards == {"A": NULL, "B": UtilityValue(2.0)}


def test_compute_rewards_rejects_malformed_profiles(vehicles, concert):
    with pytest.raises(ProfileError):
        compute_rewards(vehicles, profile_of(concert, "Bach_A", "Bach_B"))


# ---------------------------------------------------------------------------
# Session helpers
# ---------------------------------------------------------------------------


def run_session(scenario, algorithm, scenario_per_agent=None, timeout=TIMEOUT):
    """Serve one session with one client thread per agent."""
    server = EnvironmentServer(scenario, port=0, commit_timeout=timeout)
    server.start()
    values, errors = {}, {}

    def worker(agent_id):
        local = (scenario_per_agent or {}).get(agent_id, scenario)
        try:
            values[agent_id] = run_agent_client(
                server.endpoint, agent_id, algorithm, local, timeout=timeout
            )
        except Exception as exc:  # collected for assertions
            errors[agent_id] = exc

    threads = [threading.Thread(target=worker, args=(a,)) for a in scenario.agent_ids]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout * 3)
    result = server.result(timeout=timeout * 3)
    server.close()
    return result, values, errors


class RawClient:
    """Minimal scripted peer for protocol-violation tests."""

    def __init__(self, endpoint):
        self.sock = socket.create_connection(endpoint, timeout=TIMEOUT)
        self.sock.settimeout(TIMEOUT)
        self.reader = self.sock.makefile("rb")
        self.session = ""

    def send(self, kind, sender, payload):
        self.sock.sendall(Message(kind, self.session, sender, payload).to_line())

    def read(self) -> Message:
        line = self.reader.readline()
        assert line, "connection closed unexpectedly"
        return Message.from_line(line.rstrip(b"\n"))

    def close(self):
        self.sock.close()


# ---------------------------------------------------------------------------
# End-to-end sessions
# ---------------------------------------------------------------------------


class TestSessions:
    def test_vehicles_full_clients(self, vehicles):
        result, values, errors = run_session(vehicles, Algorithm.FULL)
        assert not errors
        assert result.ok
        assert result.joint == profile_of(vehicles, "wait_A", "drive_B")
        assert result.utilities == {"A": UtilityValue(0.9), "B": UtilityValue(1.0)}
        assert values == {"A": UtilityValue(0.9), "B": UtilityValue(1.0)}

    def test_vehicles_naive_clients_crash(self, vehicles):
        result, values, errors = run_session(vehicles, Algorithm.NAIVE)
        assert not errors
        assert result.joint == profile_of(vehicles, "drive_A", "drive_B")
        assert values == {"A": NEG_INF, "B": NEG_INF}

    def test_concert_lazy_clients(self, concert):
        result, values, errors = run_session(concert, Algorithm.LAZY)
        assert not errors
        assert result.joint == profile_of(concert, "Mozart_A", "Mozart_B")
        assert values["B"] == UtilityValue(4.0)

    def test_concert_naive_commits(self, concert):
        result, _, errors = run_session(concert, Algorithm.NAIVE)
        assert not errors
        assert result.joint == profile_of(concert, "Bach_A", "Mozart_B")

    @pytest.mark.parametrize("name_algo", [("vehicles", "full"), ("concert", "lazy")])
    def test_session_equals_in_process_solver(self, name_algo, vehicles, concert):
        scenario = {"vehicles": vehicles, "concert": concert}[name_algo[0]]
        report = solve_scenario(scenario, name_algo[1])
        result, _, errors = run_session(scenario, name_algo[1])
        assert not errors
        assert result.joint == report.joint
        assert result.utilities == report.utilities

    def test_corrupted_spec_aborts_with_spec_mismatch(self, vehicles):
        doc = scenario_document(vehicles)
        doc["utilities"][1]["quantification"][0]["value"] = 0.75
        corrupted = parse_scenario_document(doc)
        assert spec_digest(corrupted) != spec_digest(vehicles)

        server = EnvironmentServer(vehicles, port=0, commit_timeout=TIMEOUT)
        server.start()
        honest_error = {}

        def honest():
            try:
                run_agent_client(server.endpoint, "A", "full", vehicles, timeout=TIMEOUT)
            except SessionAborted as exc:
                honest_error["A"] = exc

        t = threading.Thread(target=honest)
        t.start()
        deadline = time.monotonic() + TIMEOUT
        while "A" not in server.registered and time.monotonic() < deadline:
            time.sleep(0.01)

        with pytest.raises(SessionAborted) as exc:
            run_agent_client(server.endpoint, "B", "full", corrupted, timeout=TIMEOUT)
        assert exc.value.code == "spec_mismatch"

        t.join(TIMEOUT)
        result = server.result(timeout=TIMEOUT)
        assert result.error_code == "spec_mismatch"
        assert honest_error["A"].code == "spec_mismatch"

    def test_unknown_agent_is_rejected_session_survives(self, vehicles):
        server = EnvironmentServer(vehicles, port=0, commit_timeout=TIMEOUT)
        server.start()
        with pytest.raises(SessionAborted) as exc:
            run_agent_client(server.endpoint, "C", "full", vehicles, timeout=TIMEOUT)
        assert exc.value.code == "unknown_agent"

        values = {}
        threads = [
            threading.Thread(
                target=lambda a=a: values.update(
                    {a: run_agent_client(server.endpoint, a, "full", vehicles, timeout=TIMEOUT)}
                )
            )
            for a in vehicles.agent_ids
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join(TIMEOUT * 2)
        assert server.result(timeout=TIMEOUT).ok
        assert values == {"A": UtilityValue(0.9), "B": UtilityValue(1.0)}

    def test_duplicate_registration_rejected(self, vehicles):
        server = EnvironmentServer(vehicles, port=0, commit_timeout=TIMEOUT)
        server.start()
        digest = spec_digest(vehicles)
        a1 = RawClient(server.endpoint)
        a1.send(
            MessageKind.REGISTER,
            "A",
            {"agent_id": "A", "algorithm": "full", "spec_digest": digest},
        )
        assert a1.read().kind is MessageKind.REGISTER_ACK

        a2 = RawClient(server.endpoint)
        a2.send(
            MessageKind.REGISTER,
            "A",
            {"agent_id": "A", "algorithm": "full", "spec_digest": digest},
        )
        reply = a2.read()
        assert reply.kind is MessageKind.ERROR
        assert reply.payload["code"] == "duplicate_registration"
        a1.close()
        a2.close()
        server.close()

    def test_commit_timeout_aborts(self):
        solo = build_game({"Z": ["go", "stay"]}, {"Z": {("go",): 1.0, ("stay",): 0.5}})
        server = EnvironmentServer(solo, port=0, commit_timeout=0.4)
        server.start()
        client = RawClient(server.endpoint)
        client.send(
            MessageKind.REGISTER,
            "Z",
            {"agent_id": "Z", "algorithm": "naive", "spec_digest": spec_digest(solo)},
        )
        ack = client.read()
        assert ack.kind is MessageKind.REGISTER_ACK
        client.session = ack.session
        client.send(MessageKind.ANNOUNCE, "Z", announce_payload(solo, "Z"))
        assert client.read().kind is MessageKind.START
        # stall instead of committing
        err = client.read()
        assert err.kind is MessageKind.ERROR
        assert err.payload["code"] == "timeout"
        result = server.result(timeout=TIMEOUT)
        assert result.error_code == "timeout"
        client.close()

    def test_invalid_commit_aborts(self):
        solo = build_game({"Z": ["go", "stay"]}, {"Z": {("go",): 1.0, ("stay",): 0.5}})
        server = EnvironmentServer(solo, port=0, commit_timeout=TIMEOUT)
        server.start()
        client = RawClient(server.endpoint)
        client.send(
            MessageKind.REGISTER,
            "Z",
            {"agent_id": "Z", "algorithm": "naive", "spec_digest": spec_digest(solo)},
        )
        client.session = client.read().session
        client.send(MessageKind.ANNOUNCE, "Z", announce_payload(solo, "Z"))
        assert client.read().kind is MessageKind.START
        client.send(MessageKind.COMMIT, "Z", {"actions": ["fly"]})
        err = client.read()
        assert err.kind is MessageKind.ERROR and err.payload["code"] == "invalid_commit"
        assert server.result(timeout=TIMEOUT).error_code == "invalid_commit"
        client.close()

    def test_serve_environment_blocks_until_done(self, concert):
        port = _free_port()
        outcome = {}

        def serving():
            outcome["result"] = serve_environment(
                concert, ("127.0.0.1", port), commit_timeout=TIMEOUT
            )

        t = threading.Thread(target=serving)
        t.start()
        values = {}
        clients = [
            threading.Thread(
                target=lambda a=a: values.update(
                    {a: run_agent_client(("127.0.0.1", port), a, "lazy", concert, timeout=TIMEOUT)}
                )
            )
            for a in concert.agent_ids
        ]
        _wait_for_port(port)
        for c in clients:
            c.start()
        for c in clients:
            c.join(TIMEOUT * 2)
        t.join(TIMEOUT * 2)
        assert outcome["result"].ok
        assert values == {"A": UtilityValue(3.0), "B": UtilityValue(4.0)}

    def test_client_connection_failure_surfaces(self, vehicles):
        port = _free_port()
        with pytest.raises(OSError):
            run_agent_client(("127.0.0.1", port), "A", "full", vehicles, timeout=0.5)


def _free_port() -> int:
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    return port


def _wait_for_port(port: int, deadline: float = TIMEOUT) -> None:
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
            return
        except OSError:
            time.sleep(0.02)
    raise AssertionError(f"nothing listening on port {port}")
