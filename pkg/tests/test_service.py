"""Socket service: auth, streaming, command routing, persistence."""

import json
import socket
import threading

from sigseek.orchestrator import SessionRunner, run_session
from sigseek.protocol import CallConnectRequest, decode, encode
from sigseek.scenarios import make_minimal
from sigseek.service import DEFAULT_TOKENS, LcsService, persist_session


def _connect(host, port, role, token=None, name="t1"):
    sock = socket.create_connection((host, port), timeout=30)
    sock.settimeout(60)
    hello = {"role": role, "token": token or DEFAULT_TOKENS.get(role, ""),
             "name": name}
    sock.sendall((json.dumps(hello) + "\n").encode())
    return sock, sock.makefile("rb")


def test_rejects_bad_token():
    runner = SessionRunner(make_minimal(), seed=2)
    svc = LcsService(runner)
    host, port = svc.start()
    try:
        sock, reader = _connect(host, port, "console", token="nope")
        msg = decode(reader.readline())
        assert msg.TYPE == "error"
        assert msg.code == "auth_failed"
        assert reader.readline() == b""
        sock.close()
    finally:
        svc.stop()


def test_role_gates_commands_and_malformed_reply():
    runner = SessionRunner(make_minimal(), seed=2)
    svc = LcsService(runner)
    host, port = svc.start()
    try:
        sock, reader = _connect(host, port, "sme", name="unit-5")
        ack = decode(reader.readline())
        assert ack.TYPE == "session_event" and ack.event == "hello_ack"
        # an sme has no business starting sessions
        sock.sendall(encode(CallConnectRequest(session_id="", sender="unit-5",
                                               seq=1, target_id="caller-1",
                                               requester="unit-5")))
        err = decode(reader.readline())
        assert err.TYPE == "error" and err.code == "forbidden"
        sock.sendall(b'{"half a frame\n')
        err = decode(reader.readline())
        assert err.TYPE == "error" and err.code == "malformed_frame"
        sock.close()
    finally:
        svc.stop()


def test_streams_session_and_persists(tmp_path):
    runner = SessionRunner(make_minimal(), seed=2, timeout_s=180.0)
    svc = LcsService(runner, out_dir=tmp_path)
    host, port = svc.start()
    worker = threading.Thread(target=svc.serve,
                              kwargs={"autostart": False,
                                      "start_timeout_s": 30.0})
    worker.start()
    sock, reader = _connect(host, port, "console", name="console-1")
    ack = decode(reader.readline())
    assert ack.event == "hello_ack"
    connect = CallConnectRequest(session_id="", sender="console-1", seq=1,
                                 target_id="caller-1", requester="console-1")
    sock.sendall(encode(connect))

    counts = {}
    closed_detail = None
    asked_again = False
    while True:
        line = reader.readline()
        if not line:
            break
        msg = decode(line)
        counts[msg.TYPE] = counts.get(msg.TYPE, 0) + 1
        if not asked_again and msg.TYPE == "location_estimate":
            # the session is live now; a second start request must bounce
            sock.sendall(encode(connect))
            asked_again = True
        if msg.TYPE == "session_event" and msg.event == "session_closed":
            closed_detail = msg.detail
            break
    sock.close()
    worker.join(timeout=60)
    assert not worker.is_alive()

    assert closed_detail == {"success": True}
    assert counts["channel_config"] >= 1
    assert counts["measurement_report"] > 10
    assert counts["location_estimate"] >= 1
    assert counts["contour_map"] >= 1
    assert counts["task_assignment"] >= 1
    assert counts.get("error", 0) >= 1  # the already_active bounce
    assert asked_again

    (session_dir,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    reports = (session_dir / "reports.jsonl").read_bytes().splitlines()
    events = (session_dir / "events.jsonl").read_bytes().splitlines()
    assert all(decode(l).TYPE == "measurement_report" for l in reports)
    assert all(decode(l).TYPE != "measurement_report" for l in events)
    outcome = json.loads((session_dir / "outcome.json").read_text())
    assert outcome["success"] is True
    assert outcome["phase_final"] == "found"


def test_persist_session_headless(tmp_path):
    publishes = []
    out = run_session(make_minimal(), seed=3, publish=publishes.append)
    path = persist_session(out, publishes, tmp_path)
    files = {p.name for p in path.iterdir()}
    assert {"reports.jsonl", "events.jsonl", "outcome.json"} <= files
    doc = json.loads((path / "outcome.json").read_text())
    assert doc["seed"] == 3
    assert doc["success"] is True
