"""Deterministic discrete-event engine and closed-form performance models.

All performance models are pure functions, so the event log alone pins the
whole simulation: replaying the same commands against the same seed yields a
byte-identical log. Event timestamps are quantized to one microsecond when
they are appended; internal scheduling keeps full float precision.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .cluster import NetworkLink, StorageAppliance, Topology
from .errors import CorruptLog

LOG_VERSION = 1


def quantize(t: float) -> float:
    """Round a timestamp to the 1 microsecond log resolution."""
    return round(t, 6)


@dataclass(frozen=True)
class Event:
    seq: int
    t: float
    kind: str
    payload: dict

    def line(self) -> str:
        payload = json.dumps(self.payload, sort_keys=True, separators=(",", ":"))
        return f'{{"seq":{self.seq},"t":{self.t:.6f},"kind":{json.dumps(self.kind)},"payload":{payload}}}'


@dataclass(frozen=True)
class WorkShare:
    """Per-node work assignment for a locked-step computation."""

    node_id: str
    work: float  # HS06 * seconds
    speed: float  # HS06

    def __post_init__(self):
        if self.work < 0 or self.speed <= 0:
            raise ValueError("work must be >= 0 and speed > 0")


class EventLog:
    """Append-only, seed-stamped record of every simulated state transition."""

    def __init__(self, seed: int):
        self.seed = seed
        self.events: list[Event] = []

    def append(self, t: float, kind: str, payload: dict) -> Event:
        t = quantize(t)
        if self.events and t < self.events[-1].t:
            raise CorruptLog(f"event time {t} precedes {self.events[-1].t}")
        event = Event(len(self.events), t, kind, payload)
        self.events.append(event)
        return event

    def header_line(self) -> str:
        return f'{{"seed":{self.seed},"version":{LOG_VERSION}}}'

    def serialize(self) -> str:
        lines = [self.header_line()]
        lines += [e.line() for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "EventLog":
        lines = text.splitlines()
        if not lines:
            raise CorruptLog("empty log")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CorruptLog(f"bad header: {exc}") from exc
        if not isinstance(header, dict) or "seed" not in header or header.get("version") != LOG_VERSION:
            raise CorruptLog(f"bad header: {lines[0]!r}")
        log = cls(header["seed"])
        last_t = None
        for i, line in enumerate(lines[1:]):
            try:
                doc = json.loads(line)
                event = Event(doc["seq"], doc["t"], doc["kind"], doc["payload"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorruptLog(f"bad event line {i}: {exc}") from exc
            if event.seq != i:
                raise CorruptLog(f"sequence gap: expected {i}, got {event.seq}")
            if last_t is not None and event.t < last_t:
                raise CorruptLog(f"time went backwards at seq {i}")
            last_t = event.t
            log.events.append(event)
        return log


class Simulator:
    """Single-threaded event loop over a monotonic simulated clock."""

    def __init__(self, seed: int = 42):
        self.now = 0.0
        self.log = EventLog(seed)
        self._heap: list[tuple[float, int]] = []
        self._entries: dict[int, tuple[float, str, dict]] = {}
        self._counter = 0

    @property
    def seed(self) -> int:
        return self.log.seed

    def record(self, kind: str, payload: dict) -> Event:
        """Append an event at the current instant."""
        return self.log.append(self.now, kind, payload)

    def schedule(self, at: float, kind: str, payload: dict) -> int:
        """Queue an event for dispatch at simulated time ``at``; returns a handle."""
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        handle = self._counter
        self._counter += 1
        self._entries[handle] = (at, kind, payload)
        heapq.heappush(self._heap, (at, handle))
        return handle

    def cancel(self, handle: int) -> None:
        self._entries.pop(handle, None)

    def next_time(self) -> float | None:
        """Time of the earliest pending event, skipping cancelled entries."""
        while self._heap and self._heap[0][1] not in self._entries:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_until(self, t: float) -> list[Event]:
        """Dispatch every pending event with time <= t and advance the clock."""
        if t < self.now:
            raise ValueError(f"cannot run backwards to {t} from {self.now}")
        dispatched = []
        while True:
            nxt = self.next_time()
            if nxt is None or nxt > t:
                break
            at, handle = heapq.heappop(self._heap)
            entry = self._entries.pop(handle, None)
            if entry is None:
                continue
            self.now = max(self.now, at)
            dispatched.append(self.log.append(at, entry[1], entry[2]))
        self.now = max(self.now, t)
        return dispatched


def locked_step_time(shares: list[WorkShare], steps: int = 1) -> float:
    """Makespan of an iterative computation where every step waits for the slowest node."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not shares:
        raise ValueError("at least one work share is required")
    return steps * max(s.work / s.speed for s in shares)


def proportional_blocks(speeds: list[float], total_work: float, granularity: float) -> list[float]:
    """Split work across nodes proportionally to speed, on a fixed work grid.

    Each share is rounded down to the granularity; the leftover quanta go to
    the fastest node. The returned values sum to total_work exactly.
    """
    if granularity <= 0:
        raise ValueError("granularity must be positive")
    if any(s <= 0 for s in speeds) or not speeds:
        raise ValueError("speeds must be positive and non-empty")
    total_q = round(total_work / granularity)
    if not math.isclose(total_q * granularity, total_work, rel_tol=0, abs_tol=1e-9):
        raise ValueError("granularity does not divide the total work")
    speed_fracs = [Fraction(s) for s in speeds]
    speed_sum = sum(speed_fracs)
    quanta = [int(Fraction(total_q) * f / speed_sum) for f in speed_fracs]
    fastest = speeds.index(max(speeds))
    quanta[fastest] += total_q - sum(quanta)
    blocks = [q * granularity for q in quanta]
    # Pin the float sum to total_work exactly; the fastest node absorbs rounding.
    blocks[fastest] = total_work - (sum(blocks) - blocks[fastest])
    return blocks


def weak_scaling_efficiency(t1: float, tn: float) -> float:
    """Weak-scaling efficiency; 1.0 means adding nodes costs nothing."""
    if t1 <= 0 or tn <= 0:
        raise ValueError("times must be positive")
    return t1 / tn


def io_rates(
    appliance: StorageAppliance,
    demands: list[tuple[str, str, float]],
) -> list[tuple[str, float]]:
    """Max-min fair bandwidth allocation per direction under the appliance caps.

    ``demands`` entries are (client_id, "read"|"write", demand_kiBps); demand
    may be ``math.inf`` for a saturating client. Returns (client_id, granted)
    in input order. Grants never exceed demand and their sum per direction
    never exceeds the directional cap.
    """
    grants: list[tuple[str, float] | None] = [None] * len(demands)
    caps = {"read": float(appliance.read_cap_kibps), "write": float(appliance.write_cap_kibps)}
    for direction, cap in caps.items():
        idx = [i for i, d in enumerate(demands) if d[1] == direction]
        remaining = cap
        # Waterfilling: satisfy the smallest demands first, then split what is
        # left evenly among the rest.
        for pos, i in enumerate(sorted(idx, key=lambda i: demands[i][2])):
            if demands[i][2] < 0:
                raise ValueError("demands must be non-negative")
            share = remaining / (len(idx) - pos)
            granted = min(demands[i][2], share)
            grants[i] = (demands[i][0], granted)
            remaining -= granted
    unknown = [demands[i][1] for i, g in enumerate(grants) if g is None]
    if unknown:
        raise ValueError(f"unknown direction(s): {sorted(set(unknown))}")
    return grants  # type: ignore[return-value]


def transfer_time(
    num_bytes: int,
    link: NetworkLink,
    concurrent_flows: int = 1,
    shared_endpoint: bool = False,
) -> float:
    """Seconds to move ``num_bytes`` over a link.

    On a flat fabric concurrent flows split the bandwidth. On the
    non-blocking fat tree, node-disjoint flows each get full bandwidth and
    the flow count only applies when the flows share an endpoint (pass
    ``shared_endpoint=True`` in that case).
    """
    if num_bytes < 0 or concurrent_flows < 1:
        raise ValueError("bytes must be >= 0 and flows >= 1")
    if num_bytes == 0:
        return 0.0
    bps = link.bandwidth_gbps * 1e9
    if link.topology is Topology.FLAT or shared_endpoint:
        bps /= concurrent_flows
    return num_bytes * 8 / bps


def metadata_time(total_ops: int, rate_ops_per_s: float) -> float:
    """Seconds for a batch of metadata operations at a calibrated rate."""
    if rate_ops_per_s <= 0:
        raise ValueError("rate must be positive")
    if total_ops < 0:
        raise ValueError("ops must be non-negative")
    return total_ops / rate_ops_per_s
