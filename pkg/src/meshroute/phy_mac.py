"""Simplified 802.11 DCF link layer.

One shared channel with graph-based interference: a node defers while any
node in its carrier-sense set transmits, and a reception fails if a node in
the link's collision set transmits during any part of it.  Unicast frames
use slotted binary exponential backoff with retries; broadcasts go out once,
without backoff or ACK.  Each node has two strict-priority queues (control
over data).
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

from .engine import EventKind, RngFactory, Simulator

DEFAULT_OVERHEAD_US = 100


class ConfigurationError(ValueError):
    pass


def airtime_us(size_bytes: int, rate_mbps: float, overhead_us: int = DEFAULT_OVERHEAD_US) -> int:
    """Channel occupancy of one frame: payload time plus fixed MAC/ACK overhead."""
    return int(math.ceil(size_bytes * 8 / rate_mbps)) + overhead_us


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    success_prob: float
    base_airtime: int = airtime_us(512, 48.0)
    control_prob: Optional[float] = None  # reception probability at the control rate; defaults to success_prob

    def __post_init__(self):
        for name in ("success_prob", "control_prob"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"link {self.src}->{self.dst}: {name} {value} outside [0, 1]")
        if self.base_airtime <= 0:
            raise ConfigurationError(f"link {self.src}->{self.dst}: base_airtime must be positive")

    @property
    def broadcast_prob(self) -> float:
        return self.success_prob if self.control_prob is None else self.control_prob


def hop_distances(adjacency: dict[int, set[int]], origin: int) -> dict[int, int]:
    dist = {origin: 0}
    frontier = [origin]
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adjacency.get(u, ())):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


class InterferenceModel:
    """Protocol-model interference.

    ``carrier_sense[n]`` holds the nodes whose transmissions make ``n`` defer.
    ``collision_set(src, dst)`` holds the nodes whose concurrent transmission
    destroys a reception at ``dst``; it always contains ``dst`` itself
    (half duplex).
    """

    def __init__(
        self,
        nodes: Iterable[int],
        adjacency: dict[int, set[int]],
        carrier_sense: dict[int, frozenset],
        collision_hops: int = 2,
        collision_overrides: Optional[dict[tuple[int, int], frozenset]] = None,
    ):
        self.nodes = sorted(nodes)
        self.adjacency = adjacency
        self.carrier_sense = carrier_sense
        self.collision_hops = collision_hops
        self._collision = dict(collision_overrides or {})
        # hears[x]: nodes that defer while x transmits
        self.hears: dict[int, tuple[int, ...]] = {n: () for n in self.nodes}
        acc: dict[int, list[int]] = {n: [] for n in self.nodes}
        for n in self.nodes:
            for x in carrier_sense.get(n, ()):
                acc[x].append(n)
        for x, ys in acc.items():
            self.hears[x] = tuple(sorted(ys))

    @classmethod
    def from_links(
        cls,
        nodes: Iterable[int],
        links: Iterable[Link],
        carrier_sense_hops: int = 1,
        collision_hops: int = 2,
        carrier_sense_overrides: Optional[dict[int, Iterable[int]]] = None,
        collision_overrides: Optional[dict[tuple[int, int], Iterable[int]]] = None,
    ) -> "InterferenceModel":
        nodes = sorted(nodes)
        adjacency: dict[int, set[int]] = {n: set() for n in nodes}
        for link in links:
            adjacency[link.src].add(link.dst)
            adjacency[link.dst].add(link.src)
        cs: dict[int, frozenset] = {}
        for n in nodes:
            dist = hop_distances(adjacency, n)
            cs[n] = frozenset(m for m, h in dist.items() if 0 < h <= carrier_sense_hops)
        for n, members in (carrier_sense_overrides or {}).items():
            cs[n] = frozenset(members) - {n}
        coll = {key: frozenset(v) | {key[1]} for key, v in (collision_overrides or {}).items()}
        return cls(nodes, adjacency, cs, collision_hops, coll)

    def collision_set(self, src: int, dst: int) -> frozenset:
        key = (src, dst)
        found = self._collision.get(key)
        if found is None:
            dist = hop_distances(self.adjacency, dst)
            found = frozenset(m for m, h in dist.items() if h <= self.collision_hops) - {src}
            self._collision[key] = found
        return found

    def neighbors(self, n: int) -> set[int]:
        return self.adjacency.get(n, set())


@dataclass(frozen=True)
class MacParams:
    slot_us: int = 20
    cw_min: int = 16
    cw_max: int = 1024
    retry_limit: Optional[int] = 7


class Priority(enum.IntEnum):
    HIGH = 0
    LOW = 1


@dataclass(frozen=True)
class Delivered:
    at: int
    attempts: int


@dataclass(frozen=True)
class RetryExhausted:
    at: int
    attempts: int


class Frame:
    __slots__ = ("packet", "dst", "broadcast", "priority", "airtime", "attempts", "cw", "t1", "t2", "on_done")

    def __init__(self, packet, dst, broadcast, priority, airtime, on_done, cw):
        self.packet = packet
        self.dst = dst
        self.broadcast = broadcast
        self.priority = priority
        self.airtime = airtime
        self.on_done = on_done
        self.attempts = 0
        self.cw = cw
        self.t1 = None
        self.t2 = None


class _Reception:
    __slots__ = ("dst", "coll", "corrupted")

    def __init__(self, dst, coll):
        self.dst = dst
        self.coll = coll
        self.corrupted = False


class _Transmission:
    __slots__ = ("src", "frame", "receptions")

    def __init__(self, src, frame, receptions):
        self.src = src
        self.frame = frame
        self.receptions = receptions


class Channel:
    """The shared medium: tracks transmissions in flight and resolves receptions."""

    def __init__(self, sim: Simulator, links: Iterable[Link], interference: InterferenceModel, rngs: RngFactory):
        self.sim = sim
        self.links: dict[tuple[int, int], Link] = {(l.src, l.dst): l for l in links}
        self.interference = interference
        self.out_links: dict[int, list[Link]] = {n: [] for n in interference.nodes}
        for key in sorted(self.links):
            self.out_links[key[0]].append(self.links[key])
        self._loss_rng = {key: rngs.stream(f"link:{key[0]}:{key[1]}") for key in sorted(self.links)}
        self.macs: dict[int, "Mac"] = {}
        self.active: list[_Transmission] = []

    def attach(self, mac: "Mac") -> None:
        self.macs[mac.node] = mac

    def link(self, src: int, dst: int) -> Link:
        try:
            return self.links[(src, dst)]
        except KeyError:
            raise ConfigurationError(f"no link {src}->{dst}") from None

    def set_success_prob(self, src: int, dst: int, prob: float, control: Optional[float] = None) -> None:
        """Change a link's quality; the control-rate probability follows ``prob`` unless given."""
        link = self.link(src, dst)
        self.links[(src, dst)] = replace(link, success_prob=prob, control_prob=control)
        self.out_links[src] = [self.links[(src, l.dst)] for l in self.out_links[src]]

    def start(self, src: int, frame: Frame) -> None:
        interference = self.interference
        if frame.broadcast:
            receivers = [l.dst for l in self.out_links[src]]
        else:
            receivers = [frame.dst]
        receptions = [_Reception(r, interference.collision_set(src, r)) for r in receivers]
        for other in self.active:
            for rec in other.receptions:
                if src in rec.coll:
                    rec.corrupted = True
            for rec in receptions:
                if other.src in rec.coll:
                    rec.corrupted = True
        tx = _Transmission(src, frame, receptions)
        self.active.append(tx)
        macs = self.macs
        for y in interference.hears[src]:
            macs[y].medium_busy()
        self.sim.after(frame.airtime, EventKind.TX_ATTEMPT_END, lambda: self._finish(tx))

    def _finish(self, tx: _Transmission) -> None:
        self.active.remove(tx)
        results = []
        broadcast = tx.frame.broadcast
        for rec in tx.receptions:
            link = self.links[(tx.src, rec.dst)]
            draw = self._loss_rng[(tx.src, rec.dst)].random()
            p = link.broadcast_prob if broadcast else link.success_prob
            results.append((rec.dst, (not rec.corrupted) and draw < p))
        macs = self.macs
        macs[tx.src].tx_complete(tx.frame, results)
        for y in self.interference.hears[tx.src]:
            macs[y].medium_idle()


class _State(enum.Enum):
    IDLE = 0
    BACKOFF = 1
    WAIT = 2
    TX = 3


class Mac:
    """Per-node DCF state machine with a high and a low priority queue.

    ``data_source``, when set, is called whenever the MAC is free and both
    queues are empty; it returns a ready ``Frame`` or ``None``.  This is how
    the routing layer performs flow selection at every transmission
    opportunity.
    """

    def __init__(
        self,
        node: int,
        sim: Simulator,
        channel: Channel,
        params: MacParams,
        rng,
        data_source: Optional[Callable[[], Optional[Frame]]] = None,
    ):
        self.node = node
        self.sim = sim
        self.channel = channel
        self.params = params
        self.rng = rng
        self.data_source = data_source
        self.high: deque[Frame] = deque()
        self.low: deque[Frame] = deque()
        self.state = _State.IDLE
        self.current: Optional[Frame] = None
        self.suspended: Optional[Frame] = None
        self.busy = 0
        self.remaining = 0
        self._expiry = None
        self.last_exit = 0
        self._busy_since: Optional[int] = None
        self.busy_us = 0
        self.tx_us = 0
        self.attempts = 0
        self.data_attempts = 0
        self.priority_violations = 0
        channel.attach(self)

    # -- queueing ---------------------------------------------------------

    def unicast(self, dst: int, packet, priority: Priority, on_done, airtime: Optional[int] = None) -> Frame:
        link = self.channel.link(self.node, dst)
        frame = Frame(packet, dst, False, priority, airtime or link.base_airtime, on_done, self.params.cw_min)
        self._enqueue(frame)
        return frame

    def broadcast(self, packet, airtime: int, on_done=None) -> Frame:
        frame = Frame(packet, None, True, Priority.HIGH, airtime, on_done, self.params.cw_min)
        self._enqueue(frame)
        return frame

    def make_frame(self, dst: int, packet, on_done) -> Frame:
        """Build a low-priority unicast frame for ``data_source`` to return."""
        link = self.channel.link(self.node, dst)
        return Frame(packet, dst, False, Priority.LOW, link.base_airtime, on_done, self.params.cw_min)

    def _enqueue(self, frame: Frame) -> None:
        frame.t1 = self.sim.now
        if frame.priority is Priority.HIGH:
            self.high.append(frame)
            cur = self.current
            if cur is not None and cur.priority is Priority.LOW and self.state in (_State.BACKOFF, _State.WAIT):
                self._suspend()
        else:
            self.low.append(frame)
        self.kick()

    @property
    def control_backlog(self) -> int:
        return len(self.high)

    def kick(self) -> None:
        if self.state is not _State.IDLE:
            return
        frame = None
        if self.high:
            frame = self.high.popleft()
        elif self.suspended is not None:
            frame, self.suspended = self.suspended, None
            self.current = frame
            self.state = _State.BACKOFF
            if self.busy == 0:
                self._arm()
            return
        elif self.low:
            frame = self.low.popleft()
        elif self.data_source is not None:
            frame = self.data_source()
            if frame is not None and frame.t1 is None:
                frame.t1 = self.sim.now
        if frame is None:
            return
        frame.t2 = self.last_exit
        self.current = frame
        self._access(frame)

    # -- channel access ---------------------------------------------------

    def _access(self, frame: Frame) -> None:
        if frame.broadcast:
            if self.busy == 0:
                self._transmit()
            else:
                self.state = _State.WAIT
            return
        self.remaining = self.rng.randrange(frame.cw) * self.params.slot_us
        self.state = _State.BACKOFF
        if self.busy == 0:
            self._arm()

    def _arm(self) -> None:
        self._expiry = self.sim.after(self.remaining, EventKind.TX_ATTEMPT_START, self._backoff_done)

    def _suspend(self) -> None:
        if self._expiry is not None:
            self.remaining = self._expiry.fire_at - self.sim.now
            self._expiry.cancel()
            self._expiry = None
        self.suspended = self.current
        self.current = None
        self.state = _State.IDLE

    def _backoff_done(self) -> None:
        self._expiry = None
        self.remaining = 0
        if self.high and self.current.priority is Priority.LOW:
            self._suspend()
            self.kick()
            return
        self._transmit()

    def _transmit(self) -> None:
        frame = self.current
        self.state = _State.TX
        frame.attempts += 1
        self.attempts += 1
        if frame.priority is Priority.LOW:
            self.data_attempts += 1
            if self.high:
                self.priority_violations += 1
        self.tx_us += frame.airtime
        self.channel.start(self.node, frame)

    def medium_busy(self) -> None:
        self.busy += 1
        if self.busy != 1:
            return
        self._busy_since = self.sim.now
        if self.state is _State.BACKOFF and self._expiry is not None:
            if self._expiry.fire_at == self.sim.now:
                return  # same-slot expiry: both stations transmit
            self.remaining = self._expiry.fire_at - self.sim.now
            self._expiry.cancel()
            self._expiry = None

    def medium_idle(self) -> None:
        self.busy -= 1
        if self.busy != 0:
            return
        if self._busy_since is not None:
            self.busy_us += self.sim.now - self._busy_since
            self._busy_since = None
        if self.state is _State.BACKOFF and self._expiry is None:
            self._arm()
        elif self.state is _State.WAIT:
            self._transmit()

    def tx_complete(self, frame: Frame, results: list[tuple[int, bool]]) -> None:
        now = self.sim.now
        self.state = _State.IDLE
        if frame.broadcast:
            self._finish(frame, results)
            return
        if results[0][1]:
            self._finish(frame, Delivered(now, frame.attempts))
            return
        limit = self.params.retry_limit
        if limit is not None and frame.attempts > limit:
            self._finish(frame, RetryExhausted(now, frame.attempts))
            return
        frame.cw = min(frame.cw * 2, self.params.cw_max)
        self._access(frame)

    def _finish(self, frame: Frame, outcome) -> None:
        self.current = None
        self.last_exit = self.sim.now
        if frame.on_done is not None:
            frame.on_done(frame, outcome)
        self.kick()

    def busy_fraction(self, elapsed: int) -> float:
        """Fraction of ``elapsed`` during which this node sensed the medium busy."""
        busy = self.busy_us
        if self._busy_since is not None:
            busy += self.sim.now - self._busy_since
        return busy / elapsed if elapsed > 0 else 0.0


def measure_w(t1_enqueue: int, t2_prev_exit: int, t3_ack: int) -> int:
    """Transmission-time sample: ``t3 - max(t1, t2)``."""
    sample = t3_ack - max(t1_enqueue, t2_prev_exit)
    if sample < 0:
        raise AssertionError(f"negative transmission time sample ({t1_enqueue}, {t2_prev_exit}, {t3_ack})")
    return sample


class SampleSource(enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


@dataclass(frozen=True)
class LinkEstimate:
    w_ewma: Optional[float] = None
    last_probe: Optional[int] = None
    sample_count: int = 0


EWMA_BETA = 0.1


def update_estimate(
    est: LinkEstimate,
    sample: float,
    source: SampleSource,
    beta: float = EWMA_BETA,
    now: Optional[int] = None,
) -> LinkEstimate:
    """Fold one W sample into the smoothed estimate; the first sample initializes it."""
    if sample <= 0:
        raise ValueError("transmission time sample must be positive")
    if est.w_ewma is None:
        w = float(sample)
    else:
        w = (1.0 - beta) * est.w_ewma + beta * sample
    last_probe = now if source is SampleSource.ACTIVE and now is not None else est.last_probe
    return LinkEstimate(w, last_probe, est.sample_count + 1)
