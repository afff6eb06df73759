"""Per-node routing state and the distance-vector control plane.

Each node keeps, in index space (node ids sorted ascending), its link
transmission-time estimates ``w``, the measures last advertised by each
neighbor ``adv[k, d]`` and, for protocols that need it, advertised ETX values
``adv_etx[k, d]``.  Unknown, poisoned and stale values are ``inf``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .phy_mac import LinkEstimate, SampleSource, update_estimate

INF = float("inf")

CONTROL_HEADER_BYTES = 56
CONTROL_ENTRY_BYTES = 12
ETX_ENTRY_BYTES = 8


@dataclass(frozen=True)
class RoutingParams:
    beacon_interval: int = 200_000
    probe_interval: int = 1_000_000
    gamma: float = 0.4
    hysteresis: float = 0.05
    stale_beacons: int = 5
    probe_window: int = 20
    ewma_beta: float = 0.1
    split_horizon: bool = True
    freeze_after: Optional[int] = None

    @property
    def stale_after(self) -> int:
        return self.stale_beacons * self.beacon_interval


@dataclass(frozen=True)
class ControlEntry:
    dest: int
    measure: float
    poisoned_toward: Optional[int] = None


@dataclass(frozen=True)
class ControlPacket:
    origin: int
    seq: int
    protocol: str
    entries: tuple[ControlEntry, ...]
    etx: Optional[tuple[tuple[int, float], ...]] = None

    @property
    def size_bytes(self) -> int:
        size = CONTROL_HEADER_BYTES + CONTROL_ENTRY_BYTES * len(self.entries)
        if self.etx is not None:
            size += ETX_ENTRY_BYTES * len(self.etx)
        return size


@dataclass(frozen=True)
class ProbePacket:
    origin: int
    seq: int
    heard: tuple[tuple[int, float], ...]
    size_bytes: int = 512


@dataclass
class PeerRecord:
    seqs: deque = field(default_factory=deque)
    max_seq: int = -1
    max_seq_at: int = 0
    reported: float = 0.0
    last_heard: Optional[int] = None
    estimate: LinkEstimate = field(default_factory=LinkEstimate)
    last_passive: Optional[int] = None
    is_neighbor: bool = False


class NeighborTable:
    """Probe-based delivery ratios and the neighbor set derived from them.

    The reverse ratio of a peer is counted from the sequence numbers of its
    probes heard over the last ``window`` probe periods; the forward ratio is
    the value the peer reports back about us.  A link counts at the smaller
    of the two.  A peer is promoted at ``ratio >= gamma`` and demoted only
    below ``gamma - hysteresis``.
    """

    def __init__(self, params: RoutingParams):
        self.params = params
        self.peers: dict[int, PeerRecord] = {}

    def peer(self, k: int) -> PeerRecord:
        rec = self.peers.get(k)
        if rec is None:
            rec = self.peers[k] = PeerRecord()
        return rec

    def record_probe(self, k: int, seq: int, reported: float, now: int) -> None:
        rec = self.peer(k)
        rec.seqs.append(seq)
        if seq > rec.max_seq:
            rec.max_seq = seq
            rec.max_seq_at = now
        rec.reported = reported
        rec.last_heard = now
        self.evaluate(k, now)

    def reverse_ratio(self, k: int, now: int) -> float:
        rec = self.peers.get(k)
        if rec is None or rec.max_seq < 0:
            return 0.0
        window = self.params.probe_window
        missed = (now - rec.max_seq_at) // self.params.probe_interval
        current = rec.max_seq + max(0, missed)
        lo = current - window
        while rec.seqs and rec.seqs[0] <= lo:
            rec.seqs.popleft()
        expected = min(window, current + 1)
        return min(1.0, len(rec.seqs) / expected)

    def ratio(self, k: int, now: int) -> float:
        rec = self.peers.get(k)
        if rec is None:
            return 0.0
        return min(rec.reported, self.reverse_ratio(k, now))

    def evaluate(self, k: int, now: int) -> bool:
        rec = self.peer(k)
        r = self.ratio(k, now)
        gamma = self.params.gamma
        if rec.is_neighbor:
            if r < gamma - self.params.hysteresis:
                rec.is_neighbor = False
        elif r >= gamma:
            rec.is_neighbor = True
        return rec.is_neighbor

    def evaluate_all(self, now: int) -> None:
        for k in sorted(self.peers):
            self.evaluate(k, now)

    def neighbors(self) -> list[int]:
        return sorted(k for k, rec in self.peers.items() if rec.is_neighbor)

    def report(self, now: int) -> tuple[tuple[int, float], ...]:
        return tuple((k, self.reverse_ratio(k, now)) for k in sorted(self.peers))


class RoutingState:
    """Routing tables of one node.

    ``node_ids`` fixes the index space.  ``q`` counts queued packets per
    destination index and is maintained by the node's data plane.
    """

    def __init__(self, node_id: int, node_ids: Sequence[int], protocol: str, params: RoutingParams = RoutingParams()):
        self.node_id = node_id
        self.ids = list(node_ids)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.idx = self.index[node_id]
        self.protocol = protocol
        self.params = params
        n = len(self.ids)
        self.n = n
        self.w = np.full(n, INF)
        self.neighbor = np.zeros(n, dtype=np.uint8)
        self.heard = np.full(n, -np.inf)
        self.adv = np.full((n, n), INF)
        self.adv_etx = np.full((n, n), INF)
        self.q = np.zeros(n)
        self.table = NeighborTable(params)
        self.seq = 0
        self._hop = np.full(n, -1, dtype=np.int64)
        self._score = np.full(n, INF)

    # -- link state -------------------------------------------------------

    def set_static_link(self, k_id: int, w: float) -> None:
        """Install a fixed neighbor with transmission time ``w`` (static analyses)."""
        k = self.index[k_id]
        self.w[k] = w
        self.neighbor[k] = 1
        rec = self.table.peer(k_id)
        rec.is_neighbor = True
        rec.estimate = LinkEstimate(float(w), None, 1)

    def refresh_neighbors(self, now: int) -> None:
        """Re-derive the neighbor set from probe ratios (until ``freeze_after``) and copy W estimates."""
        freeze = self.params.freeze_after
        if freeze is None or now < freeze:
            self.table.evaluate_all(now)
        for k_id, rec in self.table.peers.items():
            k = self.index[k_id]
            self.neighbor[k] = 1 if rec.is_neighbor else 0
            if rec.estimate.w_ewma is not None:
                self.w[k] = rec.estimate.w_ewma

    def add_w_sample(self, k_id: int, sample: float, source: SampleSource, now: int) -> None:
        rec = self.table.peer(k_id)
        rec.estimate = update_estimate(rec.estimate, sample, source, self.params.ewma_beta, now)
        if source is SampleSource.PASSIVE:
            rec.last_passive = now
        self.w[self.index[k_id]] = rec.estimate.w_ewma

    def usable(self, now: Optional[int] = None) -> np.ndarray:
        """Neighbors eligible for next-hop selection at ``now``."""
        mask = (self.neighbor != 0) & np.isfinite(self.w)
        if now is not None:
            mask &= (now - self.heard) <= self.params.stale_after
        return mask.astype(np.uint8)

    # -- control plane ----------------------------------------------------

    @property
    def etx_matrix(self) -> np.ndarray:
        """Advertised ETX values: SRCR's measure is ETX itself, E-BP carries it alongside."""
        if self.protocol in ("SRCR", "ALPHA"):
            return self.adv
        return self.adv_etx

    def etx_table(self, now: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """ETX to every destination and the neighbor index achieving it."""
        hop = np.empty(self.n, dtype=np.int64)
        score = np.empty(self.n)
        kernels.dv_next_hops(self.w, self.etx_matrix, self.usable(now), hop, score)
        hop[self.idx] = -1
        score[self.idx] = 0.0
        return score, hop

    def mark_heard(self, k_id: int, now: int) -> None:
        """Liveness from the data plane: an ACK or a data frame from ``k_id``."""
        self.heard[self.index[k_id]] = now

    def receive_control(self, pkt: ControlPacket, now: int) -> bool:
        """Store a neighbor's advertisement; returns False for non-neighbors."""
        k = self.index[pkt.origin]
        self.heard[k] = now
        rec = self.table.peer(pkt.origin)
        rec.last_heard = now
        if not self.neighbor[k]:
            return False
        row = self.adv[k]
        for entry in pkt.entries:
            d = self.index[entry.dest]
            if entry.poisoned_toward == self.node_id:
                row[d] = INF
            else:
                row[d] = entry.measure
        if pkt.etx is not None:
            erow = self.adv_etx[k]
            for dest, value in pkt.etx:
                erow[self.index[dest]] = value
        return True

    def make_control(self, entries: Iterable[ControlEntry], etx: Optional[np.ndarray] = None) -> ControlPacket:
        etx_entries = None
        if etx is not None:
            etx_entries = tuple((self.ids[d], float(etx[d])) for d in range(self.n) if np.isfinite(etx[d]))
        pkt = ControlPacket(self.node_id, self.seq, self.protocol, tuple(entries), etx_entries)
        self.seq += 1
        return pkt


def compute_etx(state: RoutingState, d: int, now: Optional[int] = None) -> tuple[float, Optional[int]]:
    """ETX from ``state``'s node to destination id ``d`` and the neighbor id achieving it."""
    score, hop = state.etx_table(now)
    di = state.index[d]
    if di == state.idx:
        return 0.0, None
    k = int(hop[di])
    return float(score[di]), (state.ids[k] if k >= 0 else None)


def converge_static(
    W: np.ndarray,
    node_ids: Sequence[int],
    protocol: str = "SRCR",
    max_rounds: int = 1000,
    unit_queue: bool = True,
) -> list[RoutingState]:
    """Run synchronous beacon rounds on a static topology until no table changes.

    ``W[i, j]`` is the transmission time from ``node_ids[i]`` to
    ``node_ids[j]`` (``inf`` where there is no link).  Every node advertises
    via :func:`protocols.advertise` and stores what its neighbors sent, exactly
    as in the simulator, but with lossless instantaneous delivery.
    """
    from . import protocols

    params = RoutingParams()
    states = [RoutingState(nid, node_ids, protocol, params) for nid in node_ids]
    n = len(node_ids)
    for i, st in enumerate(states):
        for j in range(n):
            if i != j and np.isfinite(W[i, j]):
                st.set_static_link(node_ids[j], float(W[i, j]))
    for _ in range(max_rounds):
        packets = [protocols.advertise(st, None, unit_queue=unit_queue) for st in states]
        changed = False
        for i, st in enumerate(states):
            before = (st.adv.copy(), st.adv_etx.copy())
            for j, pkt in enumerate(packets):
                # links are used in the forward direction: i hears j when i can send to j
                if i != j and np.isfinite(W[i, j]):
                    st.receive_control(pkt, 0)
            if not (np.array_equal(before[0], st.adv) and np.array_equal(before[1], st.adv_etx)):
                changed = True
        if not changed:
            return states
    raise RuntimeError("distance-vector computation did not converge")
