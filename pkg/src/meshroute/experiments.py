"""Experiment orchestration: paired comparisons, alpha sweeps, random sweeps, output files."""

from __future__ import annotations

import csv
import json
import os
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from . import metrics
from .network import RunResult, protocol_id, simulate
from .protocols import ALPHA, ProtocolId
from .scenario import FlowSpec, Scenario

DELIVERY_FILTER = 0.8


@dataclass
class Comparison:
    scenario: str
    seed: int
    runs: dict  # protocol label -> RunResult
    baseline: str = "SRCR"

    def summary(self, label: str) -> metrics.RunSummary:
        return self.runs[label].summary()

    def mean_delay_us(self, label: str, flows: Optional[Sequence[str]] = None) -> Optional[float]:
        run = self.runs[label]
        flows = run.primary_flows() if flows is None else flows
        records = [r for fid in flows for r in run.records(fid)]
        return metrics.mean_delay(records)

    def delivered_bytes(self, label: str, flows: Optional[Sequence[str]] = None) -> int:
        run = self.runs[label]
        flows = run.primary_flows() if flows is None else flows
        return sum(run.ledgers[f].delivered_bytes for f in flows)

    def delivery_ratio(self, label: str) -> float:
        run = self.runs[label]
        flows = run.primary_flows()
        inj = sum(run.ledgers[f].injected for f in flows)
        return sum(run.ledgers[f].delivered for f in flows) / inj if inj else 0.0

    def differential(self, label: str, flows=None) -> Optional[float]:
        return metrics.delay_differential(self.mean_delay_us(label, flows), self.mean_delay_us(self.baseline, flows))

    def ratio(self, label: str, flows=None) -> Optional[float]:
        return metrics.throughput_ratio(self.delivered_bytes(label, flows), self.delivered_bytes(self.baseline, flows))

    def kept(self) -> bool:
        """Whether some protocol delivered at least 80% of the primary traffic."""
        return any(self.delivery_ratio(l) >= DELIVERY_FILTER for l in self.runs)

    def rows(self) -> list[dict]:
        out = []
        for label in self.runs:
            if label == self.baseline:
                continue
            d = self.differential(label)
            out.append(
                {
                    "scenario": self.scenario,
                    "seed": self.seed,
                    "protocol": label,
                    "baseline": self.baseline,
                    "delay_differential_ms": None if d is None else d / 1000.0,
                    "throughput_ratio": self.ratio(label),
                }
            )
        return out


def single_hop_only(scenario: Scenario) -> bool:
    """True when every primary flow's endpoints share a direct usable link."""
    direct = {(l.src, l.dst) for l in scenario.links if l.success_prob >= scenario.params.gamma}
    return bool(scenario.flows) and all((f.src, f.dst) in direct for f in scenario.flows)


def run_compare(
    scenario: Scenario,
    protocols: Sequence = ("SRCR", "CDP"),
    seed: Optional[int] = None,
    trace: bool = False,
    baseline: str = "SRCR",
) -> Comparison:
    """Run every protocol on the same scenario and seed (identical arrival processes)."""
    if not protocols:
        raise ValueError("no protocols to compare")
    seed = scenario.params.seed if seed is None else seed
    runs = {}
    for p in protocols:
        pid = p if isinstance(p, ProtocolId) else protocol_id(p, scenario)
        runs[pid.label] = simulate(scenario, pid, seed, trace)
    if baseline not in runs:
        baseline = next(iter(runs))
    return Comparison(scenario.name, seed, runs, baseline)


def dominant_next_hops(run: RunResult, flows: Optional[Iterable[str]] = None) -> dict:
    """Most used next hop per ``(node, destination)``; ties to the lowest id."""
    dests = None
    if flows is not None:
        dests = {run.flows[f].dst for f in flows}
    by_key: dict = defaultdict(Counter)
    for (node, dst, hop), n in run.forwarding.items():
        if dests is None or dst in dests:
            by_key[(node, dst)][hop] += n
    return {key: min(c, key=lambda h: (-c[h], h)) for key, c in by_key.items()}


def decision_agreement(candidate: RunResult, reference: RunResult, flows: Optional[Iterable[str]] = None) -> float:
    """Share of the candidate's forwarding events that pick the reference's usual next hop."""
    flows = list(candidate.primary_flows() if flows is None else flows)
    ref = dominant_next_hops(reference, flows)
    dests = {candidate.flows[f].dst for f in flows}
    total = agree = 0
    for (node, dst, hop), n in candidate.forwarding.items():
        if dst not in dests:
            continue
        total += n
        if ref.get((node, dst)) == hop:
            agree += n
    return agree / total if total else 1.0


# -- alpha sweep -------------------------------------------------------------


@dataclass
class AlphaRow:
    label: str
    alpha: Optional[float]
    mean_delay_ms: Optional[float]
    delivered: int
    injected: int


def alpha_sweep(
    scenario: Scenario,
    alphas: Sequence[float],
    path1: Optional[Sequence[int]] = None,
    path2: Optional[Sequence[int]] = None,
    seed: Optional[int] = None,
    include_cdp: bool = True,
) -> list[AlphaRow]:
    """Delay of the split flow for each alpha, plus one CDP row."""
    if scenario.alpha is None and (path1 is None or path2 is None):
        raise ValueError(f"scenario {scenario.name} has no alpha paths")
    flow_id = scenario.alpha.flow if scenario.alpha is not None else scenario.flows[0].id
    p1 = tuple(path1) if path1 is not None else scenario.alpha.path1
    p2 = tuple(path2) if path2 is not None else scenario.alpha.path2
    links = {(l.src, l.dst) for l in scenario.links}
    for path in (p1, p2):
        for a, b in zip(path, path[1:]):
            if (a, b) not in links:
                raise ValueError(f"path {list(path)} uses missing link {a}->{b}")
    seed = scenario.params.seed if seed is None else seed
    rows = []
    for a in alphas:
        run = simulate(scenario, ProtocolId(ALPHA, float(a), p1, p2), seed)
        rows.append(_alpha_row(run, flow_id, f"alpha={a:g}", float(a)))
    if include_cdp:
        run = simulate(scenario, "CDP", seed)
        rows.append(_alpha_row(run, flow_id, "CDP", None))
    return rows


def _alpha_row(run: RunResult, flow_id: str, label: str, alpha) -> AlphaRow:
    led = run.ledgers[flow_id]
    d = metrics.mean_delay(led.records)
    return AlphaRow(label, alpha, None if d is None else d / 1000.0, led.delivered, led.injected)


# -- random configuration sweep ---------------------------------------------


def random_configuration(scenario: Scenario, rng: random.Random, n_flows: int = 2, max_mbps: float = 7.0) -> Scenario:
    """Random source/destination pairs with loads uniform in ``[0, max_mbps]``."""
    nodes = list(scenario.nodes)
    flows = []
    for i in range(n_flows):
        src, dst = rng.sample(nodes, 2)
        flows.append(FlowSpec(f"f{i}", src, dst, round(rng.uniform(0.0, max_mbps), 3)))
    return replace(scenario, flows=tuple(flows), alpha=None)


@dataclass
class SweepResult:
    comparisons: list = field(default_factory=list)
    excluded: list = field(default_factory=list)  # (config index, reason)

    def differentials(self, label: str, load: Optional[str] = None) -> list[float]:
        out = []
        for c in self.comparisons:
            if load is not None and metrics.classify_load(c.mean_delay_us(c.baseline)) != load:
                continue
            d = c.differential(label)
            if d is not None:
                out.append(d / 1000.0)
        return out

    def ratios(self, label: str, load: Optional[str] = None) -> list[float]:
        out = []
        for c in self.comparisons:
            if load is not None and metrics.classify_load(c.mean_delay_us(c.baseline)) != load:
                continue
            r = c.ratio(label)
            if r is not None:
                out.append(r)
        return out


def sweep(
    scenario: Scenario,
    n_configs: int,
    protocols: Sequence[str] = ("SRCR", "CDP"),
    seed: int = 1,
    n_flows: int = 2,
    jobs: int = 1,
) -> SweepResult:
    """Paired comparisons over random configurations of ``scenario``'s topology."""
    rng = random.Random(seed)
    configs = []
    result = SweepResult()
    for i in range(n_configs):
        sc = random_configuration(scenario, rng, n_flows)
        sc = replace(sc, name=f"{scenario.name}#{i}")
        if single_hop_only(sc):
            result.excluded.append((i, "single-hop"))
            continue
        configs.append((i, sc))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            comps = list(pool.map(_compare_job, [(sc, tuple(protocols), seed + i) for i, sc in configs]))
    else:
        comps = [_compare_job((sc, tuple(protocols), seed + i)) for i, sc in configs]
    for (i, _), comp in zip(configs, comps):
        if comp.kept():
            result.comparisons.append(comp)
        else:
            result.excluded.append((i, "delivery below 80%"))
    return result


def _compare_job(args) -> Comparison:
    sc, protocols, seed = args
    comp = run_compare(sc, protocols, seed)
    for run in comp.runs.values():  # keep pickling cheap
        run.trace = None
    return comp


# -- output ------------------------------------------------------------------


def write_trace(run: RunResult, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "flow", "seq", "event", "node", "cause"])
        w.writerows(run.trace or [])


def write_cdf(values: Iterable[float], path: str, column: str = "value") -> None:
    steps = metrics.cdf(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([column, "cdf"])
        for v, c in steps:
            w.writerow([repr(float(v)), repr(c)])


def run_summary_dict(run: RunResult) -> dict:
    out = run.summary().to_dict()
    out["background_flows"] = list(run.background)
    out["conservation"] = run.conservation_holds()
    out["events_processed"] = run.events_processed
    out["mac"] = {str(n): s for n, s in sorted(run.mac_stats.items())}
    return out


def emit(runs: dict, out_dir: str, trace: bool = False, extra: Optional[dict] = None) -> list[str]:
    """Write ``summary.json``, optional per-run traces and per-flow delay CDFs to ``out_dir``."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    written = []
    summary = {"runs": {label: run_summary_dict(run) for label, run in runs.items()}}
    if extra:
        summary.update(extra)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    for label, run in runs.items():
        safe = label.replace("(", "_").replace(")", "").replace("=", "")
        if trace and run.trace is not None:
            p = os.path.join(out_dir, f"trace_{safe}.csv")
            write_trace(run, p)
            written.append(p)
        for fid in run.primary_flows():
            recs = run.records(fid)
            if recs:
                p = os.path.join(out_dir, f"delay_cdf_{safe}_{fid}.csv")
                write_cdf(((r.arrived - r.departed) / 1000.0 for r in recs), p, "delay_ms")
                written.append(p)
    return written
