"""Wire protocol between measurement units, the calculation server, and consoles.

Framing is one JSON object per line, UTF-8, sorted keys, no spaces, so encoding
is canonical: equal messages produce identical bytes. Every frame carries the
same envelope (type, schema_version, session_id, sender, seq) with a payload
whose fields depend on the variant. Decoders ignore unknown payload fields and
reject unknown variants and incompatible schema majors, which lets old and new
peers interoperate across minor revisions.
"""

from __future__ import annotations

import json
import math
from bisect import insort
from dataclasses import dataclass, field, fields
from typing import Any, ClassVar

import numpy as np

from .sme import BearingProfile, MeasurementReport
from .uplink import ChannelConfig, RssiSample
from .world import Pose

PROTOCOL_VERSION = "1.0"


class ProtocolError(ValueError):
    pass


class MalformedFrameError(ProtocolError):
    pass


class UnknownVariantError(ProtocolError):
    pass


class SchemaVersionError(ProtocolError):
    pass


class SessionStateError(ProtocolError):
    pass


@dataclass
class Message:
    """Envelope fields shared by every variant."""

    TYPE: ClassVar[str] = ""
    session_id: str
    sender: str
    seq: int

    def payload(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            if f.name in ("session_id", "sender", "seq"):
                continue
            out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_payload(cls, session_id: str, sender: str, seq: int,
                     payload: dict[str, Any]) -> "Message":
        known = {f.name for f in fields(cls)} - {"session_id", "sender", "seq"}
        kw = {k: _plain(v) for k, v in payload.items() if k in known}
        return cls(session_id=session_id, sender=sender, seq=seq, **kw)


def _plain(v: Any) -> Any:
    # JSON arrays come back as lists; messages store tuples (including inside
    # nested dicts) so that decode of an encode compares equal to the original
    if isinstance(v, list):
        return tuple(_plain(x) for x in v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


@dataclass
class CallConnectRequest(Message):
    TYPE: ClassVar[str] = "call_connect_request"
    target_id: str = ""
    requester: str = ""


@dataclass
class ChannelConfigMsg(Message):
    TYPE: ClassVar[str] = "channel_config"
    uplink_freq_hz: float = 738e6
    downlink_freq_hz: float = 793e6
    bandwidth_hz: float = 7.5e6
    subframe_ms: float = 1.0
    period_ms: float = 80.0
    tx_power_dbm: float = 23.0
    voice_tx_power_dbm: float = 13.0
    dmrs_symbols: int = 2
    rx_antennas: int = 2
    noise_figure_db: float = 7.0
    meas_noise_db: float = 2.0
    detection_margin_db: float = 3.0
    activated_at_s: float = 0.0

    @classmethod
    def from_config(cls, session_id: str, sender: str, seq: int, cfg: ChannelConfig,
                    activated_at_s: float) -> "ChannelConfigMsg":
        kw = {f.name: getattr(cfg, f.name) for f in fields(ChannelConfig)}
        return cls(session_id=session_id, sender=sender, seq=seq,
                   activated_at_s=activated_at_s, **kw)

    def to_config(self) -> ChannelConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(ChannelConfig)}
        return ChannelConfig(**kw)


@dataclass
class MeasurementReportMsg(Message):
    TYPE: ClassVar[str] = "measurement_report"
    sme_id: str = ""
    target_id: str = ""
    report_seq: int = 0
    timestamp_s: float = 0.0
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    building_index: int | None = None
    floor_index: int | None = None
    mode: str = "omni"
    antenna_heading_rad: float | None = None
    rssi_dbm: float = 0.0
    rssi_valid: bool = False

    @classmethod
    def from_report(cls, session_id: str, sender: str, seq: int,
                    r: MeasurementReport) -> "MeasurementReportMsg":
        return cls(session_id=session_id, sender=sender, seq=seq,
                   sme_id=r.sme_id, target_id=r.target_id, report_seq=r.seq,
                   timestamp_s=r.timestamp_s, x=r.pose.x, y=r.pose.y,
                   heading=r.pose.heading, building_index=r.pose.building_index,
                   floor_index=r.pose.floor_index, mode=r.mode,
                   antenna_heading_rad=r.heading_rad,
                   rssi_dbm=r.rssi.rssi_dbm, rssi_valid=r.rssi.valid)

    def to_report(self) -> MeasurementReport:
        pose = Pose(x=self.x, y=self.y, heading=self.heading,
                    building_index=self.building_index, floor_index=self.floor_index)
        return MeasurementReport(
            sme_id=self.sme_id, target_id=self.target_id, seq=self.report_seq,
            timestamp_s=self.timestamp_s, pose=pose, mode=self.mode,
            rssi=RssiSample(self.timestamp_s, self.rssi_dbm, self.rssi_valid),
            heading_rad=self.antenna_heading_rad)


@dataclass
class LocationEstimateMsg(Message):
    TYPE: ClassVar[str] = "location_estimate"
    x: float = 0.0
    y: float = 0.0
    cov: tuple = ((1.0, 0.0), (0.0, 1.0))
    floor_index: int | None = None
    building_index: int | None = None
    n_reports: int = 0
    timestamp_s: float = 0.0
    degenerate: bool = False
    boundary_center: tuple = (0.0, 0.0)
    boundary_semi_axes: tuple = (1.0, 1.0)
    boundary_orientation_rad: float = 0.0
    boundary_rect: tuple = (0.0, 0.0, 1.0, 1.0)


@dataclass
class ContourMapMsg(Message):
    TYPE: ClassVar[str] = "contour_map"
    region_kind: str = "outdoor"
    region_rect: tuple = (0.0, 0.0, 1.0, 1.0)
    building_index: int | None = None
    floor_index: int | None = None
    origin: tuple = (0.0, 0.0)
    cell_size: float = 5.0
    shape: tuple = (1, 1)
    values: tuple = ((None,),)  # row-major, None where unsupported
    peak_cell: tuple = (0, 0)
    peak_dbm: float = 0.0
    generation: int = 0

    @classmethod
    def from_contour(cls, session_id: str, sender: str, seq: int, cm,
                     round_db: float = 0.01) -> "ContourMapMsg":
        vals = []
        for row in cm.values:
            vals.append(tuple(None if not np.isfinite(v)
                              else round(float(v) / round_db) * round_db
                              for v in row))
        return cls(session_id=session_id, sender=sender, seq=seq,
                   region_kind=cm.region.kind, region_rect=tuple(cm.region.rect),
                   building_index=cm.region.building_index,
                   floor_index=cm.region.floor_index, origin=tuple(cm.origin),
                   cell_size=cm.cell_size, shape=tuple(cm.values.shape),
                   values=tuple(vals), peak_cell=tuple(cm.peak_cell),
                   peak_dbm=float(cm.peak_dbm), generation=cm.generation)


@dataclass
class TaskAssignmentMsg(Message):
    TYPE: ClassVar[str] = "task_assignment"
    rescuer_id: str = ""
    phase: str = "building"
    strip: tuple | None = None
    floors: tuple = ()
    routes: tuple = ()  # tuple of routes, each a tuple of (x, y) pairs
    building_index: int | None = None
    revision: int = 0


@dataclass
class SweepResultMsg(Message):
    TYPE: ClassVar[str] = "sweep_result"
    sme_id: str = ""
    x: float = 0.0
    y: float = 0.0
    building_index: int | None = None
    floor_index: int | None = None
    started_s: float = 0.0
    elapsed_s: float = 0.0
    bearings_rad: tuple = ()
    mean_rssi_dbm: tuple = ()
    best_bearing_rad: float = 0.0

    @classmethod
    def from_profile(cls, session_id: str, sender: str, seq: int, sme_id: str,
                     p: BearingProfile) -> "SweepResultMsg":
        return cls(session_id=session_id, sender=sender, seq=seq, sme_id=sme_id,
                   x=p.pose.x, y=p.pose.y, building_index=p.pose.building_index,
                   floor_index=p.pose.floor_index, started_s=p.started_s,
                   elapsed_s=p.elapsed_s, bearings_rad=tuple(p.bearings_rad),
                   mean_rssi_dbm=tuple(p.mean_rssi_dbm),
                   best_bearing_rad=p.best_bearing_rad)


@dataclass
class SessionEventMsg(Message):
    TYPE: ClassVar[str] = "session_event"
    time_s: float = 0.0
    actor: str = ""
    event: str = ""
    detail: dict = field(default_factory=dict)


@dataclass
class ErrorMsg(Message):
    TYPE: ClassVar[str] = "error"
    code: str = ""
    detail: str = ""


MESSAGE_TYPES: dict[str, type[Message]] = {
    cls.TYPE: cls for cls in (
        CallConnectRequest, ChannelConfigMsg, MeasurementReportMsg,
        LocationEstimateMsg, ContourMapMsg, TaskAssignmentMsg, SweepResultMsg,
        SessionEventMsg, ErrorMsg)
}


def encode(msg: Message) -> bytes:
    """Canonical single-line frame for a message, newline terminated."""
    frame = {
        "type": msg.TYPE,
        "schema_version": PROTOCOL_VERSION,
        "session_id": msg.session_id,
        "sender": msg.sender,
        "seq": msg.seq,
        "payload": msg.payload(),
    }
    return (json.dumps(frame, sort_keys=True, separators=(",", ":"),
                       allow_nan=False) + "\n").encode("utf-8")


def decode(line: bytes | str) -> Message:
    """Parse one frame. Unknown payload fields are ignored; unknown variants
    and incompatible schema majors are errors, as are truncated frames."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedFrameError(f"not UTF-8: {e}") from e
    line = line.strip()
    if not line:
        raise MalformedFrameError("empty frame")
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedFrameError(f"bad JSON: {e}") from e
    if not isinstance(frame, dict):
        raise MalformedFrameError("frame must be a JSON object")
    for key in ("type", "schema_version", "session_id", "sender", "seq", "payload"):
        if key not in frame:
            raise MalformedFrameError(f"frame missing {key!r}")
    version = str(frame["schema_version"])
    try:
        major = int(version.split(".")[0])
    except ValueError as e:
        raise SchemaVersionError(f"bad schema_version {version!r}") from e
    if major != int(PROTOCOL_VERSION.split(".")[0]):
        raise SchemaVersionError(f"incompatible schema_version {version!r}")
    cls = MESSAGE_TYPES.get(frame["type"])
    if cls is None:
        raise UnknownVariantError(f"unknown message type {frame['type']!r}")
    payload = frame["payload"]
    if not isinstance(payload, dict):
        raise MalformedFrameError("payload must be a JSON object")
    try:
        return cls.from_payload(frame["session_id"], frame["sender"],
                                int(frame["seq"]), payload)
    except (TypeError, ValueError) as e:
        raise MalformedFrameError(f"bad payload for {frame['type']}: {e}") from e


def decode_stream(data: bytes | str):
    """Decode a buffer of newline-delimited frames, yielding messages."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    for line in data.splitlines():
        if line.strip():
            yield decode(line)


# --- session registry -------------------------------------------------------

@dataclass
class SessionState:
    session_id: str
    target_id: str
    created_s: float
    activates_at_s: float
    config: ChannelConfig
    active: bool = False
    closed: bool = False
    subscribers: list[str] = field(default_factory=list)
    reports: list[MeasurementReportMsg] = field(default_factory=list)
    seen: set[tuple[str, int]] = field(default_factory=set)
    last_recompute_s: float = -math.inf
    dirty: bool = False
    accepted: int = 0
    duplicates: int = 0
    rejected: int = 0


class SessionRegistry:
    """Server-side bookkeeping: one session per caller, report de-duplication,
    and recompute throttling."""

    def __init__(self, setup_delay_s: float = 2.0,
                 recompute_interval_s: float = 1.0) -> None:
        self.setup_delay_s = setup_delay_s
        self.recompute_interval_s = recompute_interval_s
        self.sessions: dict[str, SessionState] = {}
        self._by_target: dict[str, str] = {}
        self._counter = 0

    def start_session(self, target_id: str, now_s: float, config: ChannelConfig,
                      reachable: bool = True) -> SessionState:
        """Begin the base-station handshake for a caller. The session becomes
        active (and the channel config broadcastable) setup_delay_s later."""
        existing = self._by_target.get(target_id)
        if existing is not None and not self.sessions[existing].closed:
            raise SessionStateError(f"target {target_id!r} already in a session")
        if not reachable:
            raise SessionStateError(f"target {target_id!r} is not reachable")
        self._counter += 1
        sid = f"s{self._counter:04d}"
        st = SessionState(session_id=sid, target_id=target_id, created_s=now_s,
                          activates_at_s=now_s + self.setup_delay_s, config=config)
        self.sessions[sid] = st
        self._by_target[target_id] = sid
        return st

    def subscribe(self, session_id: str, sender: str) -> None:
        st = self._get(session_id)
        if sender not in st.subscribers:
            st.subscribers.append(sender)

    def poll_activation(self, now_s: float) -> list[ChannelConfigMsg]:
        """Activate pending sessions whose setup delay has elapsed; returns the
        channel config broadcast for each, one copy per subscriber."""
        out: list[ChannelConfigMsg] = []
        for st in self.sessions.values():
            if st.closed or st.active or now_s < st.activates_at_s:
                continue
            st.active = True
            for _ in st.subscribers or [None]:
                out.append(ChannelConfigMsg.from_config(
                    st.session_id, "lcs", len(out), st.config,
                    activated_at_s=st.activates_at_s))
        return out

    def close(self, session_id: str) -> None:
        st = self._get(session_id)
        st.closed = True
        st.active = False

    def _get(self, session_id: str) -> SessionState:
        st = self.sessions.get(session_id)
        if st is None:
            raise SessionStateError(f"unknown session {session_id!r}")
        return st

    def ingest(self, msg: MeasurementReportMsg) -> str:
        """Store a report. Returns "accepted", "duplicate", or raises for
        structurally unusable frames. Duplicates (same unit, same report_seq)
        are acknowledged but not stored twice."""
        st = self.sessions.get(msg.session_id)
        if st is None:
            raise SessionStateError(f"unknown session {msg.session_id!r}")
        if st.closed:
            st.rejected += 1
            raise SessionStateError(f"session {msg.session_id} is closed")
        key = (msg.sme_id, msg.report_seq)
        if key in st.seen:
            st.duplicates += 1
            return "duplicate"
        st.seen.add(key)
        insort(st.reports, msg, key=lambda r: (r.timestamp_s, r.sme_id, r.report_seq))
        st.accepted += 1
        st.dirty = True
        return "accepted"

    def should_recompute(self, session_id: str, now_s: float) -> bool:
        """Rate limiter for the estimation pipeline: at most one recompute per
        interval no matter how fast reports arrive, and none when idle."""
        st = self._get(session_id)
        if not st.dirty:
            return False
        if now_s - st.last_recompute_s < self.recompute_interval_s:
            return False
        st.last_recompute_s = now_s
        st.dirty = False
        return True


# --- lossy transport ---------------------------------------------------------

@dataclass
class Link:
    """One direction of a radio link with Bernoulli loss and uniform latency.
    Delivery order is preserved per link (FIFO)."""

    loss_prob: float = 0.01
    latency_lo_s: float = 0.030
    latency_hi_s: float = 0.120
    _last_delivery_s: float = field(default=-math.inf, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss_prob must lie in [0, 1)")
        if self.latency_lo_s < 0.0 or self.latency_hi_s < self.latency_lo_s:
            raise ValueError("latency bounds must satisfy 0 <= lo <= hi")


def transport(link: Link, now_s: float, rng: np.random.Generator,
              ) -> tuple[str, float | None]:
    """Fate of one frame sent at now_s: ("dropped", None) or
    ("delivered", t). Later frames never overtake earlier ones."""
    if rng.random() < link.loss_prob:
        return ("dropped", None)
    latency = rng.uniform(link.latency_lo_s, link.latency_hi_s)
    t = max(now_s + latency, link._last_delivery_s)
    link._last_delivery_s = t
    return ("delivered", t)
