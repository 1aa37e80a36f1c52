"""Socket front end exposing a live search session to external clients.

The wire format is the same newline-delimited frame used by the virtual
transport, one UTF-8 JSON object per line in both directions. A client's
first line is a handshake object (not a protocol frame):

    {"role": "sme" | "console" | "admin", "token": "...", "name": "c1"}

Authenticated clients receive the full outbound stream of the session. Inbound
frames are funneled into the runner's command queue and applied on the
simulation thread, so every registry mutation stays serialized no matter how
many sockets are open. Traffic is persisted per session under
out_dir/<session_id>/: reports.jsonl, events.jsonl, and outcome.json once the
run ends.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import asdict
from pathlib import Path

from .orchestrator import SessionRunner
from .protocol import (CallConnectRequest, ErrorMsg, MeasurementReportMsg,
                       Message, ProtocolError, SessionEventMsg, decode, encode)

ROLES = ("sme", "console", "admin")

# static bearer tokens; a deployment would swap these for a real
# certification service behind the same handshake
DEFAULT_TOKENS = {
    "sme": "sme-dev-token",
    "console": "console-dev-token",
    "admin": "admin-dev-token",
}

COMMAND_ROLES = ("console", "admin")


class _Client:
    def __init__(self, sock: socket.socket, role: str, name: str) -> None:
        self.sock = sock
        self.role = role
        self.name = name
        self.outbox: queue.Queue = queue.Queue(maxsize=4096)
        self.closed = False

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class SessionStore:
    """Per-session on-disk record: reports, event stream, final outcome."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._files: dict[tuple[str, str], object] = {}

    def _file(self, session_id: str, name: str):
        key = (session_id, name)
        f = self._files.get(key)
        if f is None:
            d = self.root / session_id
            d.mkdir(parents=True, exist_ok=True)
            f = open(d / name, "ab")
            self._files[key] = f
        return f

    def append(self, msg: Message, frame: bytes) -> None:
        if not msg.session_id:
            return
        name = ("reports.jsonl" if isinstance(msg, MeasurementReportMsg)
                else "events.jsonl")
        f = self._file(msg.session_id, name)
        f.write(frame)
        f.flush()

    def write_outcome(self, session_id: str, outcome) -> Path:
        d = self.root / session_id
        d.mkdir(parents=True, exist_ok=True)
        doc = asdict(outcome)
        path = d / "outcome.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    def close(self) -> None:
        for f in self._files.values():
            f.close()
        self._files.clear()


class LcsService:
    """Bridges one SessionRunner onto a TCP listener."""

    def __init__(self, runner: SessionRunner, host: str = "127.0.0.1",
                 port: int = 0, tokens: dict[str, str] | None = None,
                 out_dir: str | Path | None = None,
                 pace_s: float = 0.0) -> None:
        self.runner = runner
        self.host = host
        self.port = port
        self.tokens = dict(DEFAULT_TOKENS if tokens is None else tokens)
        self.pace_s = pace_s
        self.store = SessionStore(out_dir) if out_dir is not None else None
        self.commands: queue.Queue = queue.Queue()
        runner.publish = self.publish
        runner.command_queue = self.commands
        self._clients: list[_Client] = []
        self._lock = threading.Lock()
        self._listener: socket.socket | None = None
        self._stopping = threading.Event()
        self._started = threading.Event()
        self._seq = 0

    # --- lifecycle ----------------------------------------------------------

    def start(self) -> tuple[str, int]:
        """Bind and start accepting clients; returns the bound address."""
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind((self.host, self.port))
        s.listen(8)
        self._listener = s
        self.port = s.getsockname()[1]
        threading.Thread(target=self._accept_loop, daemon=True).start()
        return s.getsockname()[:2]

    def serve(self, autostart: bool = True, start_timeout_s: float = 60.0):
        """Run the session to completion, streaming as it goes.

        autostart=False holds the simulation until a console sends a
        CallConnectRequest (or the timeout expires).
        """
        if not autostart and not self._started.wait(start_timeout_s):
            self._system_event("start_timeout")
            self.stop()
            raise TimeoutError("no console requested a session start")
        self.runner.start()
        try:
            while not self.runner._done:
                t0 = time.monotonic()
                self.runner.tick()
                if self.pace_s > 0.0:
                    lag = self.pace_s - (time.monotonic() - t0)
                    if lag > 0.0:
                        time.sleep(lag)
        finally:
            outcome = self.runner.outcome()
            sid = self.runner.session.session_id if self.runner.session else ""
            if self.store is not None and sid:
                self.store.write_outcome(sid, outcome)
            self._system_event("session_closed", session_id=sid,
                               success=outcome.success)
            self.stop()
        return outcome

    def stop(self, drain_s: float = 1.0) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            clients, self._clients = self._clients, []
        # let writer threads flush queued frames (the session-closed event in
        # particular) before tearing the sockets down
        deadline = time.monotonic() + drain_s
        for c in clients:
            while not c.outbox.empty() and time.monotonic() < deadline:
                time.sleep(0.01)
            c.close()
        if self.store is not None:
            self.store.close()

    # --- outbound -----------------------------------------------------------

    def publish(self, msg: Message) -> None:
        """Called from the simulation thread for every outbound message."""
        frame = encode(msg)
        if self.store is not None:
            self.store.append(msg, frame)
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            try:
                c.outbox.put_nowait(frame)
            except queue.Full:
                # a stalled reader must not stall the session
                self._drop(c)

    def _system_event(self, event: str, session_id: str = "", **detail) -> None:
        self._seq += 1
        self.publish(SessionEventMsg(session_id=session_id, sender="lcs-service",
                                     seq=self._seq, time_s=self.runner.clock_s,
                                     actor="lcs-service", event=event,
                                     detail=detail))

    def _drop(self, client: _Client) -> None:
        with self._lock:
            if client in self._clients:
                self._clients.remove(client)
        client.close()

    # --- inbound ------------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client, args=(conn,),
                             daemon=True).start()

    def _serve_client(self, conn: socket.socket) -> None:
        conn.settimeout(10.0)
        reader = conn.makefile("rb")
        try:
            hello = json.loads(reader.readline().decode("utf-8"))
            role, token = hello.get("role"), hello.get("token")
            name = str(hello.get("name", "")) or f"{role}-client"
        except (ValueError, UnicodeDecodeError, OSError):
            conn.close()
            return
        if role not in ROLES or token != self.tokens.get(role):
            self._seq += 1
            try:
                conn.sendall(encode(ErrorMsg(session_id="", sender="lcs-service",
                                             seq=self._seq, code="auth_failed",
                                             detail="bad role or token")))
            except OSError:
                pass
            conn.close()
            return
        conn.settimeout(None)
        client = _Client(conn, role, name)
        with self._lock:
            self._clients.append(client)
        threading.Thread(target=self._writer_loop, args=(client,),
                         daemon=True).start()
        self._seq += 1
        client.outbox.put(encode(SessionEventMsg(
            session_id="", sender="lcs-service", seq=self._seq,
            time_s=self.runner.clock_s, actor="lcs-service", event="hello_ack",
            detail={"role": role, "name": name})))
        self._reader_loop(client, reader)

    def _writer_loop(self, client: _Client) -> None:
        while not client.closed:
            frame = client.outbox.get()
            if frame is None:
                return
            try:
                client.sock.sendall(frame)
            except OSError:
                self._drop(client)
                return

    def _reader_loop(self, client: _Client, reader) -> None:
        while not client.closed:
            try:
                line = reader.readline()
            except OSError:
                break
            if not line:
                break
            if not line.strip():
                continue
            try:
                msg = decode(line)
            except ProtocolError as e:
                self._reply(client, code="malformed_frame", detail=str(e))
                continue
            self._handle(client, msg)
        self._drop(client)

    def _handle(self, client: _Client, msg: Message) -> None:
        if isinstance(msg, MeasurementReportMsg):
            if client.role != "sme":
                self._reply(client, code="forbidden",
                            detail="only sme clients submit reports")
                return
            self.commands.put(msg)
        elif isinstance(msg, CallConnectRequest):
            if client.role not in COMMAND_ROLES:
                self._reply(client, code="forbidden", detail="console role required")
            elif self._started.is_set() or self.runner.session is not None:
                self._reply(client, code="already_active",
                            detail="target already in a session")
            else:
                self._started.set()
        elif client.role in COMMAND_ROLES:
            # reroutes, sweep requests, aborts; the runner validates targets
            self.commands.put(msg)
        else:
            self._reply(client, code="forbidden",
                        detail=f"{client.role} may not send {msg.TYPE}")

    def _reply(self, client: _Client, code: str, detail: str) -> None:
        self._seq += 1
        try:
            client.outbox.put_nowait(encode(ErrorMsg(
                session_id="", sender="lcs-service", seq=self._seq,
                code=code, detail=detail)))
        except queue.Full:
            self._drop(client)


def persist_session(outcome, publishes: list[Message],
                    out_dir: str | Path) -> Path:
    """Write the same per-session directory layout the live service produces,
    for headless runs that captured their publish stream."""
    store = SessionStore(out_dir)
    sid = ""
    for msg in publishes:
        sid = sid or msg.session_id
        store.append(msg, encode(msg))
    sid = sid or "session"
    path = store.write_outcome(sid, outcome)
    store.close()
    return path.parent
