"""Nodes and the assembled network: data plane, control-plane timers, run results."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

from . import protocols as P
from .engine import EventKind, RngFactory, Simulator, millis, seconds
from .metrics import DeliveryRecord, LossLedger, RunSummary, summarize_flow
from .phy_mac import (
    Channel,
    Delivered,
    InterferenceModel,
    Mac,
    MacParams,
    Priority,
    SampleSource,
    airtime_us,
    measure_w,
)
from .routing import ControlPacket, ProbePacket, RoutingParams, RoutingState
from .scenario import Params, Scenario
from .traffic import DropCause, Flow, FlowKind, Packet, background_flows, poisson_arrivals

PERIOD_JITTER = 0.1  # beacon and probe periods vary uniformly by +-10%


class _ActiveProbe:
    __slots__ = ("origin",)

    def __init__(self, origin):
        self.origin = origin


def routing_params(params: Params, split_horizon: bool = True) -> RoutingParams:
    return RoutingParams(
        beacon_interval=millis(params.beacon_interval_ms),
        probe_interval=millis(params.probe_interval_ms),
        gamma=params.gamma,
        hysteresis=params.hysteresis,
        stale_beacons=params.stale_beacons,
        probe_window=params.probe_window,
        ewma_beta=params.ewma_beta,
        split_horizon=split_horizon and params.split_horizon,
        freeze_after=seconds(params.warmup_s) if params.freeze_neighbors else None,
    )


class Node:
    """One mesh node: routing state, a packet buffer and a MAC.

    SRCR, CDP and the alpha split keep a single FIFO; BP and E-BP keep one
    virtual queue per destination.  Either way the buffer holds at most
    ``capacity`` packets.  The MAC pulls the next data frame through
    :meth:`next_frame`, so forwarding decisions always use the tables as
    they are at the transmission opportunity.
    """

    def __init__(self, node_id: int, net: "Network"):
        self.id = node_id
        self.net = net
        sim = net.sim
        self.sim = sim
        proto = net.protocol
        self.proto = proto
        self.state = RoutingState(node_id, net.node_ids, proto.name, net.rparams)
        self.mac = Mac(node_id, sim, net.channel, net.mac_params, net.rngs.stream(f"backoff:{node_id}"), self.next_frame)
        self.capacity = net.params.buffer_capacity
        self.vq = proto.uses_virtual_queues
        self.fifo: deque[Packet] = deque()
        self.queues: dict[int, deque[Packet]] = {}
        self.held = 0  # packets in the buffer (not counting the one handed to the MAC)
        self.in_mac: Optional[Packet] = None
        self.probe_seq = 0
        self.alpha_rng = None

    # -- buffer -----------------------------------------------------------

    def admit(self, pkt: Packet) -> None:
        if self.held >= self.capacity:
            self.net.drop(pkt, self.id, DropCause.OVERFLOW)
            return
        self.held += 1
        self.state.q[self.state.index[pkt.dst]] += 1
        if self.vq:
            q = self.queues.get(pkt.dst)
            if q is None:
                q = self.queues[pkt.dst] = deque()
            q.append(pkt)
        else:
            self.fifo.append(pkt)
        self.mac.kick()

    def _release(self, pkt: Packet) -> None:
        # q counts packets waiting in the buffer, not the one the MAC is serving
        self.state.q[self.state.index[pkt.dst]] -= 1

    def buffered(self) -> list[Packet]:
        out = list(self.fifo)
        for d in sorted(self.queues):
            out.extend(self.queues[d])
        if self.in_mac is not None:
            out.append(self.in_mac)
        return out

    # -- forwarding -------------------------------------------------------

    def _route(self, pkt: Packet, now: int) -> Optional[int]:
        net = self.net
        if net.static_routes is not None:
            return net.static_routes.get((self.id, pkt.dst))
        if pkt.path is not None:
            return P.alpha_split_next_hop(self.id, pkt.path)
        name = self.proto.name
        if name == P.CDP:
            dec = P.cdp_next_hop(self.state, pkt.dst, now)
        else:
            dec = P.srcr_next_hop(self.state, pkt.dst, now)
        return None if dec is None else dec.next_hop

    def _pick_fifo(self, now: int) -> Optional[tuple[Packet, int]]:
        hops: dict[int, Optional[int]] = {}
        fifo = self.fifo
        i = 0
        while i < len(fifo):
            pkt = fifo[i]
            if pkt.dst in hops:
                k = hops[pkt.dst]
            else:
                k = hops[pkt.dst] = self._route(pkt, now)
            if k is not None:
                del fifo[i]
                return pkt, k
            i += 1
        return None

    def _pick_vq(self, now: int) -> Optional[tuple[Packet, int]]:
        if self.net.static_routes is not None:
            for d in sorted(self.queues):
                q = self.queues[d]
                k = self.net.static_routes.get((self.id, d))
                if q and k is not None:
                    return q.popleft(), k
            return None
        if self.proto.name == P.BP:
            dec = P.bp_flow_select(self.state, now)
        else:
            dec = P.ebp_flow_select(self.state, now)
        if dec is None:
            return None
        return self.queues[dec.dest].popleft(), dec.next_hop

    def next_frame(self):
        """Called by the MAC when it is free: choose a packet and its next hop."""
        now = self.sim.now
        while self.held:
            picked = self._pick_vq(now) if self.vq else self._pick_fifo(now)
            if picked is None:
                return None
            pkt, k = picked
            self.held -= 1
            self._release(pkt)
            if pkt.hops > 0:
                pkt.ttl -= 1
                if pkt.ttl <= 0:
                    self.net.drop(pkt, self.id, DropCause.LOOP)
                    continue
            self.in_mac = pkt
            self.net.forwarded(self.id, pkt, k)
            return self.mac.make_frame(k, pkt, self._data_done)
        return None

    def _data_done(self, frame, outcome) -> None:
        pkt = frame.packet
        self.in_mac = None
        now = self.sim.now
        self.state.add_w_sample(frame.dst, measure_w(frame.t1, frame.t2, now), SampleSource.PASSIVE, now)
        if isinstance(outcome, Delivered):
            self.state.mark_heard(frame.dst, now)
            pkt.hops += 1
            self.net.nodes[frame.dst].receive(pkt, self.id)
        else:
            self.net.drop(pkt, self.id, DropCause.RETRY)

    def receive(self, pkt: Packet, sender: int) -> None:
        self.state.mark_heard(sender, self.sim.now)
        if pkt.dst == self.id:
            self.net.deliver(pkt, self.id)
        else:
            self.admit(pkt)

    def originate(self, pkt: Packet) -> None:
        alpha = self.net.alpha
        if alpha is not None and pkt.flow == alpha[0]:
            tag = P.alpha_split_tag(self.alpha_rng, self.proto.alpha)
            pkt.path = alpha[1] if tag == 1 else alpha[2]
        self.admit(pkt)

    # -- control plane ----------------------------------------------------

    def beacon(self) -> None:
        now = self.sim.now
        self.state.refresh_neighbors(now)
        pkt = P.advertise(self.state, now)
        self.mac.broadcast(pkt, airtime_us(pkt.size_bytes, self.net.params.control_rate_mbps, self.net.params.mac_overhead_us), self._broadcast_done)

    def probe(self) -> None:
        now = self.sim.now
        st = self.state
        pkt = ProbePacket(self.id, self.probe_seq, st.table.report(now))
        self.probe_seq += 1
        params = self.net.params
        self.mac.broadcast(pkt, airtime_us(pkt.size_bytes, params.control_rate_mbps, params.mac_overhead_us), self._broadcast_done)
        # active probes toward neighbors that carried no data lately
        horizon = st.params.probe_interval
        for k in st.table.neighbors():
            rec = st.table.peers[k]
            if rec.last_passive is None or now - rec.last_passive > horizon:
                self.mac.unicast(k, _ActiveProbe(self.id), Priority.HIGH, self._probe_done)

    def _probe_done(self, frame, outcome) -> None:
        now = self.sim.now
        self.state.add_w_sample(frame.dst, measure_w(frame.t1, frame.t2, now), SampleSource.ACTIVE, now)
        if isinstance(outcome, Delivered):
            self.state.mark_heard(frame.dst, now)

    def _broadcast_done(self, frame, results) -> None:
        nodes = self.net.nodes
        pkt = frame.packet
        for dst, ok in results:
            if ok:
                nodes[dst].on_broadcast(pkt)

    def on_broadcast(self, pkt) -> None:
        now = self.sim.now
        st = self.state
        if isinstance(pkt, ControlPacket):
            st.refresh_neighbors(now)
            st.receive_control(pkt, now)
            self.mac.kick()
        else:
            mine = 0.0
            for k, r in pkt.heard:
                if k == self.id:
                    mine = r
                    break
            st.table.record_probe(pkt.origin, pkt.seq, mine, now)
            st.refresh_neighbors(now)


@dataclass
class RunResult:
    scenario: str
    protocol: str
    seed: int
    end_time: int
    flows: dict
    ledgers: dict
    observed_in_flight: dict
    forwarding: Counter
    mac_stats: dict
    trace: Optional[list]
    events_processed: int
    background: tuple = ()

    def summary(self) -> RunSummary:
        return RunSummary(
            self.scenario,
            self.protocol,
            self.seed,
            {fid: summarize_flow(self.ledgers[fid], f.src, f.dst) for fid, f in self.flows.items()},
        )

    def conservation_holds(self) -> bool:
        for fid, led in self.ledgers.items():
            lhs = led.injected
            rhs = led.delivered + led.overflow + led.retry + led.loop + self.observed_in_flight.get(fid, 0)
            if lhs != rhs:
                return False
        return True

    def records(self, flow_id: str) -> list[DeliveryRecord]:
        return self.ledgers[flow_id].records

    def primary_flows(self) -> list[str]:
        return [fid for fid in self.flows if fid not in self.background]


class Network:
    """Builds and runs one simulation of ``scenario`` under ``protocol``."""

    def __init__(
        self,
        scenario: Scenario,
        protocol: P.ProtocolId,
        seed: Optional[int] = None,
        trace: bool = False,
        static_routes: Optional[dict] = None,
        record_events: bool = False,
    ):
        self.scenario = scenario
        self.params = params = scenario.params
        self.protocol = protocol
        self.seed = params.seed if seed is None else seed
        self.sim = Simulator(record=record_events)
        self.rngs = RngFactory(self.seed)
        self.static_routes = static_routes
        self.rparams = routing_params(params, protocol.split_horizon)
        self.mac_params = MacParams(params.slot_us, params.cw_min, params.cw_max, params.retry_limit)
        self.node_ids = list(scenario.nodes)
        interference = InterferenceModel.from_links(
            self.node_ids,
            scenario.links,
            params.carrier_sense_hops,
            params.collision_hops,
            dict(scenario.carrier_sense),
            dict(scenario.collision),
        )
        self.channel = Channel(self.sim, scenario.links, interference, self.rngs)
        self.alpha = None
        if protocol.name == P.ALPHA:
            if scenario.alpha is None:
                raise ValueError(f"scenario {scenario.name} defines no alpha paths")
            self.alpha = (scenario.alpha.flow, protocol.path1 or scenario.alpha.path1, protocol.path2 or scenario.alpha.path2)
        self.nodes = {n: Node(n, self) for n in self.node_ids}
        if self.alpha is not None:
            self.nodes[self.alpha[1][0]].alpha_rng =self.rngs.stream(f"alpha:{self.alpha[0]}")

        flows = scenario.flow_objects()
        bg = []
        if params.background_rate > 0:
            costs = {(l.src, l.dst): l.base_airtime / l.success_prob for l in scenario.links if l.success_prob > 0}
            bg = background_flows(self.node_ids, costs, params.background_rate, seconds(params.warmup_s), seconds(params.duration_s))
        self.flows: dict[str, Flow] = {f.id: f for f in flows + bg}
        self.background = tuple(f.id for f in bg)
        self.ledgers = {fid: LossLedger(fid) for fid in self.flows}
        self.forwarding: Counter = Counter()
        self.trace: Optional[list] = [] if trace else None
        self._seq = {fid: 0 for fid in self.flows}

    # -- bookkeeping hooks ------------------------------------------------

    def _log(self, pkt: Packet, event: str, node: int, cause: str = "") -> None:
        if self.trace is not None:
            self.trace.append((self.sim.now, pkt.flow, pkt.seq, event, node, cause))

    def drop(self, pkt: Packet, node: int, cause: DropCause) -> None:
        self.ledgers[pkt.flow].drop(cause)
        self._log(pkt, "drop", node, cause.value)

    def deliver(self, pkt: Packet, node: int) -> None:
        led = self.ledgers[pkt.flow]
        led.delivered += 1
        led.delivered_bytes += pkt.size
        led.records.append(DeliveryRecord(pkt.flow, pkt.seq, pkt.created_at, self.sim.now, pkt.hops))
        self._log(pkt, "deliver", node)

    def forwarded(self, node: int, pkt: Packet, next_hop: int) -> None:
        self.forwarding[(node, pkt.dst, next_hop)] += 1
        self._log(pkt, "forward", node, str(next_hop))

    # -- scheduling -------------------------------------------------------

    def _start_flow(self, flow: Flow) -> None:
        arrivals = poisson_arrivals(flow, self.rngs.stream(f"flow:{flow.id}"), self.params.packet_size)
        node = self.nodes[flow.src]
        ttl = self.params.ttl
        size = self.params.packet_size
        led = self.ledgers[flow.id]

        def arrive():
            seq = self._seq[flow.id]
            self._seq[flow.id] = seq + 1
            pkt = Packet(flow.id, seq, flow.src, flow.dst, self.sim.now, ttl, size)
            led.injected += 1
            self._log(pkt, "inject", flow.src)
            node.originate(pkt)
            schedule_next()

        def schedule_next():
            t = next(arrivals, None)
            if t is not None:
                self.sim.at(t, EventKind.TRAFFIC_ARRIVAL, arrive)

        schedule_next()

    def _periodic(self, first: int, period: int, kind: EventKind, action, rng) -> None:
        # jittered so hidden nodes with nearby phases do not collide every period
        spread = int(period * PERIOD_JITTER)

        def tick():
            action()
            self.sim.after(period + rng.randint(-spread, spread), kind, tick)

        self.sim.at(first, kind, tick)

    def run(self) -> RunResult:
        params = self.params
        end = seconds(params.duration_s)
        T = self.rparams.beacon_interval
        probe = self.rparams.probe_interval
        phase = self.rngs.stream("phase")
        for n in self.node_ids:
            node = self.nodes[n]
            jitter = self.rngs.stream(f"jitter:{n}")
            self._periodic(phase.randrange(probe), probe, EventKind.PROBE_TICK, node.probe, jitter)
            self._periodic(phase.randrange(T), T, EventKind.CONTROL_BEACON, node.beacon, jitter)
        for ev in self.scenario.events:
            self.sim.at(
                seconds(ev.at_s),
                EventKind.MEASURE_RECOMPUTE,
                lambda ev=ev: self.channel.set_success_prob(ev.src, ev.dst, ev.p),
            )
        for fid in sorted(self.flows):
            self._start_flow(self.flows[fid])
        self.sim.at(end, EventKind.SIM_END, None)
        self.sim.run_until(end)
        return self._result(end)

    def _result(self, end: int) -> RunResult:
        in_flight: Counter = Counter()
        for node in self.nodes.values():
            for pkt in node.buffered():
                in_flight[pkt.flow] += 1
        stats = {}
        elapsed = self.sim.now
        for n, node in self.nodes.items():
            mac = node.mac
            stats[n] = {
                "busy_fraction": mac.busy_fraction(elapsed),
                "attempts": mac.attempts,
                "data_attempts": mac.data_attempts,
                "priority_violations": mac.priority_violations,
            }
        return RunResult(
            scenario=self.scenario.name,
            protocol=self.protocol.label,
            seed=self.seed,
            end_time=end,
            flows=self.flows,
            ledgers=self.ledgers,
            observed_in_flight=dict(in_flight),
            forwarding=self.forwarding,
            mac_stats=stats,
            trace=self.trace,
            events_processed=self.sim.events_processed,
            background=self.background,
        )


def protocol_id(name: str, scenario: Optional[Scenario] = None, alpha: Optional[float] = None) -> P.ProtocolId:
    """Parse a protocol label such as ``CDP``, ``CDP-nosh`` or ``ALPHA`` (with ``alpha``)."""
    key = name.strip().upper()
    if key in ("CDP-NOSH", "CDPNOSH"):
        return P.ProtocolId(P.CDP, split_horizon=False)
    key = key.replace("-", "")
    if key == "ALPHA":
        if scenario is None or scenario.alpha is None:
            raise ValueError("the alpha split needs a scenario with alpha paths")
        return P.ProtocolId(P.ALPHA, alpha, scenario.alpha.path1, scenario.alpha.path2)
    return P.ProtocolId(key)


def simulate(scenario: Scenario, protocol, seed: Optional[int] = None, trace: bool = False, **kw) -> RunResult:
    if isinstance(protocol, str):
        protocol = protocol_id(protocol, scenario)
    return Network(scenario, protocol, seed, trace, **kw).run()
