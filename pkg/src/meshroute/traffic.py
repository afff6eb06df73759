"""Flows, packets and traffic sources."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .engine import US_PER_S

DEFAULT_TTL = 32
DEFAULT_PACKET_SIZE = 512


class DropCause(enum.Enum):
    OVERFLOW = "overflow"
    RETRY = "retry"
    LOOP = "loop"


class FlowKind(enum.Enum):
    POISSON = "poisson"
    BACKGROUND = "background"


@dataclass(frozen=True)
class Flow:
    """A unidirectional UDP flow.

    ``rate`` is bits/s for Poisson flows and packets/s for background flows.
    ``start``/``stop`` are simulation times in microseconds.
    """

    id: str
    src: int
    dst: int
    rate: float
    start: int
    stop: int
    kind: FlowKind = FlowKind.POISSON

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"flow {self.id}: negative rate")
        if self.src == self.dst:
            raise ValueError(f"flow {self.id}: source equals destination")

    def mean_interarrival_us(self, packet_size: int = DEFAULT_PACKET_SIZE) -> float:
        if self.rate <= 0:
            return float("inf")
        if self.kind is FlowKind.BACKGROUND:
            return US_PER_S / self.rate
        return packet_size * 8 * US_PER_S / self.rate


class Packet:
    __slots__ = ("flow", "seq", "src", "dst", "ttl", "created_at", "size", "path", "hops")

    def __init__(
        self,
        flow: str,
        seq: int,
        src: int,
        dst: int,
        created_at: int,
        ttl: int = DEFAULT_TTL,
        size: int = DEFAULT_PACKET_SIZE,
        path: Optional[tuple[int, ...]] = None,
    ):
        self.flow = flow
        self.seq = seq
        self.src = src
        self.dst = dst
        self.ttl = ttl
        self.created_at = created_at
        self.size = size
        self.path = path
        self.hops = 0

    def __repr__(self) -> str:
        return f"Packet({self.flow}#{self.seq} {self.src}->{self.dst} ttl={self.ttl})"


def poisson_arrivals(flow: Flow, rng, packet_size: int = DEFAULT_PACKET_SIZE) -> Iterator[int]:
    """Arrival instants of ``flow`` in ``[start, stop)``, exponential gaps."""
    mean = flow.mean_interarrival_us(packet_size)
    if mean == float("inf") or flow.stop <= flow.start:
        return
    rate = 1.0 / mean
    t = float(flow.start)
    while True:
        t += rng.expovariate(rate)
        if t >= flow.stop:
            return
        yield int(t)


def background_flows(
    nodes: Sequence[int],
    link_costs: dict[tuple[int, int], float],
    rate: float,
    start: int,
    stop: int,
) -> list[Flow]:
    """One low-rate Poisson flow per node toward its cheapest neighbor.

    ``link_costs`` maps ``(src, dst)`` to the expected per-packet cost used to
    pick the neighbor; ties go to the lowest id.
    """
    if rate <= 0:
        return []
    flows = []
    for n in sorted(nodes):
        options = sorted((cost, dst) for (src, dst), cost in link_costs.items() if src == n)
        if not options:
            continue
        flows.append(Flow(f"bg{n}", n, options[0][1], rate, start, stop, FlowKind.BACKGROUND))
    return flows
