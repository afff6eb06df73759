"""Next-hop and flow-selection policies: SRCR, BP, E-BP, CDP and the alpha split.

All policies read only the node's own :class:`RoutingState`: its queues,
its W estimates and the last measures its neighbors advertised.  Ties go to
the lowest node id (equivalently the lowest index).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .routing import ControlEntry, ControlPacket, RoutingState

INF = float("inf")

SRCR = "SRCR"
BP = "BP"
EBP = "EBP"
CDP = "CDP"
ALPHA = "ALPHA"
PROTOCOLS = (SRCR, BP, EBP, CDP, ALPHA)

# E-BP mixes ETX (time) with queue differentials (packets per unit time);
# scores are taken with times in milliseconds.
EBP_UNIT_US = 1000.0


@dataclass(frozen=True)
class ProtocolId:
    name: str
    alpha: Optional[float] = None
    path1: Optional[tuple[int, ...]] = None
    path2: Optional[tuple[int, ...]] = None
    split_horizon: bool = True

    def __post_init__(self):
        if self.name not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.name!r}; expected one of {', '.join(PROTOCOLS)}")
        if self.name == ALPHA:
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValueError("alpha split needs alpha in [0, 1]")
            if not self.path1 or not self.path2:
                raise ValueError("alpha split needs two paths")
            if self.path1[0] != self.path2[0] or self.path1[-1] != self.path2[-1]:
                raise ValueError("alpha split paths must share source and destination")
            if set(self.path1[1:-1]) & set(self.path2[1:-1]):
                raise ValueError("alpha split paths must be node-disjoint except at the endpoints")

    @property
    def uses_virtual_queues(self) -> bool:
        return self.name in (BP, EBP)

    @property
    def label(self) -> str:
        if self.name == ALPHA:
            return f"ALPHA({self.alpha:g})"
        if self.name == CDP and not self.split_horizon:
            return "CDP-nosh"
        return self.name


@dataclass(frozen=True)
class Decision:
    dest: int
    next_hop: int
    score: float


def _decision(state: RoutingState, d: int, k: int, score: float) -> Optional[Decision]:
    if k < 0 or not np.isfinite(score):
        return None
    return Decision(state.ids[d], state.ids[k], float(score))


# -- distance-vector family (SRCR, CDP) ------------------------------------


def _dv_hops(state: RoutingState, matrix: np.ndarray, now: Optional[int]) -> tuple[np.ndarray, np.ndarray]:
    hop = state._hop
    score = state._score
    kernels.dv_next_hops(state.w, matrix, state.usable(now), hop, score)
    return hop, score


def srcr_next_hop(state: RoutingState, d: int, now: Optional[int] = None) -> Optional[Decision]:
    """``argmin_k ETX(k, d) + W(n, k)``."""
    di = state.index[d]
    hop, score = _dv_hops(state, state.etx_matrix, now)
    return _decision(state, di, int(hop[di]), score[di])


def cdp_next_hop(state: RoutingState, d: int, now: Optional[int] = None) -> Optional[Decision]:
    """``argmin_k W(n, k) + advertised V(k, d)``; ``None`` when every neighbor is unreachable."""
    di = state.index[d]
    hop, score = _dv_hops(state, state.adv, now)
    return _decision(state, di, int(hop[di]), score[di])


def cdp_measures(state: RoutingState, now: Optional[int] = None, unit_queue: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Congestion measure toward every destination, plus the next hops used.

    ``V(d) = W(n, K_d) + sum_j q_j W(n, K_j) + adv(K_d, d)``.  With
    ``unit_queue`` the local draining time is that of the packet alone, which
    turns the recursion into the ETX recursion.
    """
    hop, score = _dv_hops(state, state.adv, now)
    hop = hop.copy()
    values = score.copy()
    if not unit_queue:
        values += kernels.drain_time(state.w, hop, state.q)
    values[hop < 0] = INF
    values[state.idx] = 0.0
    hop[state.idx] = -1
    return values, hop


def cdp_measure(state: RoutingState, d: int, now: Optional[int] = None, unit_queue: bool = False) -> float:
    values, _ = cdp_measures(state, now, unit_queue)
    return float(values[state.index[d]])


# -- backpressure family ---------------------------------------------------


def bp_next_hop(state: RoutingState, d: int, now: Optional[int] = None) -> Optional[Decision]:
    """``argmin_k (adv(k, d) - q_d) / W(n, k)``; ``None`` (retain) unless the best is negative."""
    di = state.index[d]
    k, s = kernels.backpressure_hop(state.w, state.adv, state.usable(now), float(state.q[di]), di, None, 1.0)
    if k < 0 or s >= 0:
        return None
    return _decision(state, di, k, s)


def bp_flow_select(state: RoutingState, now: Optional[int] = None) -> Optional[Decision]:
    d, k, s = kernels.backpressure_select(state.w, state.adv, state.usable(now), state.q, state.idx, None, 1.0)
    if d < 0 or s >= 0:
        return None
    return _decision(state, d, k, s)


def ebp_next_hop(state: RoutingState, d: int, now: Optional[int] = None) -> Optional[Decision]:
    """``argmin_k ETX(k, d) + (adv(k, d) - q_d) / W(n, k)``; transmits whenever finite."""
    di = state.index[d]
    k, s = kernels.backpressure_hop(
        state.w, state.adv, state.usable(now), float(state.q[di]), di, state.adv_etx, EBP_UNIT_US
    )
    return _decision(state, di, k, s)


def ebp_flow_select(state: RoutingState, now: Optional[int] = None) -> Optional[Decision]:
    d, k, s = kernels.backpressure_select(
        state.w, state.adv, state.usable(now), state.q, state.idx, state.adv_etx, EBP_UNIT_US
    )
    if d < 0:
        return None
    return _decision(state, d, k, s)


# -- alpha split -----------------------------------------------------------


def alpha_split_tag(rng, alpha: float) -> int:
    """Path tag for a new packet at the source: 1 with probability ``alpha``, else 2."""
    return 1 if rng.random() < alpha else 2


def alpha_split_next_hop(node_id: int, path: tuple[int, ...]) -> int:
    """Next node on the packet's pinned path."""
    try:
        pos = path.index(node_id)
    except ValueError:
        raise AssertionError(f"packet at node {node_id} which is not on its path {path}") from None
    if pos + 1 >= len(path):
        raise AssertionError(f"node {node_id} is the end of path {path}")
    return path[pos + 1]


# -- advertisements --------------------------------------------------------


def advertise(state: RoutingState, now: Optional[int], unit_queue: bool = False) -> ControlPacket:
    """Build this node's control packet for the current tables."""
    proto = state.protocol
    ids = state.ids
    if proto == CDP:
        values, hop = cdp_measures(state, now, unit_queue)
        poison = state.params.split_horizon
        entries = [
            ControlEntry(ids[d], float(values[d]), ids[hop[d]] if poison and hop[d] >= 0 else None)
            for d in range(state.n)
        ]
        return state.make_control(entries)
    if proto in (BP, EBP):
        q = state.q.copy()
        q[state.idx] = 0.0
        entries = [ControlEntry(ids[d], float(q[d])) for d in range(state.n)]
        etx = state.etx_table(now)[0] if proto == EBP else None
        return state.make_control(entries, etx)
    # SRCR proper is loop-free source routing; its distance-vector form gets the same poisoning as CDP
    etx, hop = state.etx_table(now)
    poison = state.params.split_horizon
    return state.make_control(
        ControlEntry(ids[d], float(etx[d]), ids[hop[d]] if poison and hop[d] >= 0 else None) for d in range(state.n)
    )
