"""Evaluation quantities computed from completed runs.

Delays are in simulation microseconds unless a name says otherwise.  An
undefined quantity (no delivered packets, zero baseline) is ``None``, never
zero.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .traffic import DropCause

LOW_LOAD_DELAY_S = 0.1


@dataclass(frozen=True)
class DeliveryRecord:
    flow: str
    seq: int
    departed: int
    arrived: int
    hops: int

    def __post_init__(self):
        if self.arrived < self.departed:
            raise ValueError("arrival before departure")


@dataclass
class LossLedger:
    flow: str
    injected: int = 0
    delivered: int = 0
    overflow: int = 0
    retry: int = 0
    loop: int = 0
    delivered_bytes: int = 0
    records: list = field(default_factory=list)

    def drop(self, cause: DropCause) -> None:
        if cause is DropCause.OVERFLOW:
            self.overflow += 1
        elif cause is DropCause.RETRY:
            self.retry += 1
        else:
            self.loop += 1

    @property
    def dropped(self) -> int:
        return self.overflow + self.retry + self.loop

    @property
    def in_flight(self) -> int:
        return self.injected - self.delivered - self.dropped


def mean_delay(records: Sequence[DeliveryRecord]) -> Optional[float]:
    if not records:
        return None
    return sum(r.arrived - r.departed for r in records) / len(records)


def delay_differential(candidate: Optional[float], baseline: Optional[float]) -> Optional[float]:
    """``candidate - baseline``; negative favors the candidate."""
    if candidate is None or baseline is None:
        return None
    return candidate - baseline


def throughput_ratio(candidate_bytes: float, baseline_bytes: float) -> Optional[float]:
    if baseline_bytes <= 0:
        return None
    return candidate_bytes / baseline_bytes


def cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF as ``(value, P[X <= value])`` steps, one per distinct value."""
    xs = sorted(values)
    if not xs:
        raise ValueError("cdf of an empty sample")
    n = len(xs)
    steps = []
    for i, x in enumerate(xs):
        if i + 1 < n and xs[i + 1] == x:
            continue
        steps.append((x, (i + 1) / n))
    return steps


def cdf_eval(steps: Sequence[tuple[float, float]], x: float) -> float:
    """Right-continuous evaluation of a step CDF."""
    pos = bisect_right([v for v, _ in steps], x)
    return 0.0 if pos == 0 else steps[pos - 1][1]


def quantile(steps: Sequence[tuple[float, float]], p: float) -> float:
    """Smallest value whose CDF reaches ``p``."""
    for v, c in steps:
        if c >= p:
            return v
    return steps[-1][0]


def loss_decomposition(ledger: LossLedger) -> dict[str, float]:
    """Percentages of injected packets by fate; they sum to 100."""
    if ledger.injected <= 0:
        raise ValueError(f"flow {ledger.flow}: nothing injected")
    pct = 100.0 / ledger.injected
    return {
        "overflow": ledger.overflow * pct,
        "retry": ledger.retry * pct,
        "loop": ledger.loop * pct,
        "delivered": ledger.delivered * pct,
        "in_flight": ledger.in_flight * pct,
    }


def reordering_displacements(records: Sequence[DeliveryRecord]) -> list[int]:
    """Arrival rank minus sequence rank for each delivered packet of one flow."""
    by_arrival = sorted(records, key=lambda r: (r.arrived, r.seq))
    seq_rank = {seq: i for i, seq in enumerate(sorted(r.seq for r in records))}
    return [i - seq_rank[r.seq] for i, r in enumerate(by_arrival)]


def reordering_cdf(records: Sequence[DeliveryRecord]) -> list[tuple[float, float]]:
    return cdf(abs(d) for d in reordering_displacements(records))


def classify_load(baseline_delay_us: Optional[float]) -> Optional[str]:
    """``"low"`` when the baseline mean delay is under 0.1 s, else ``"high"``."""
    if baseline_delay_us is None:
        return None
    return "low" if baseline_delay_us < LOW_LOAD_DELAY_S * 1e6 else "high"


@dataclass(frozen=True)
class FlowSummary:
    flow: str
    src: int
    dst: int
    injected: int
    delivered: int
    mean_delay_ms: Optional[float]
    throughput_bytes: int
    loss: dict
    max_hops: int

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.injected if self.injected else 0.0


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    protocol: str
    seed: int
    flows: dict

    def flow(self, flow_id: str) -> FlowSummary:
        return self.flows[flow_id]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "protocol": self.protocol,
            "seed": self.seed,
            "flows": {
                fid: {
                    "src": f.src,
                    "dst": f.dst,
                    "injected": f.injected,
                    "delivered": f.delivered,
                    "mean_delay_ms": f.mean_delay_ms,
                    "throughput_bytes": f.throughput_bytes,
                    "loss_pct": f.loss,
                    "max_hops": f.max_hops,
                }
                for fid, f in self.flows.items()
            },
        }


def summarize_flow(ledger: LossLedger, src: int, dst: int) -> FlowSummary:
    d = mean_delay(ledger.records)
    loss = loss_decomposition(ledger) if ledger.injected else {}
    return FlowSummary(
        flow=ledger.flow,
        src=src,
        dst=dst,
        injected=ledger.injected,
        delivered=ledger.delivered,
        mean_delay_ms=None if d is None else d / 1000.0,
        throughput_bytes=ledger.delivered_bytes,
        loss=loss,
        max_hops=max((r.hops for r in ledger.records), default=0),
    )
