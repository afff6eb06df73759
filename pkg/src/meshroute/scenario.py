"""Scenario files: a small YAML dialect describing topology, flows and parameters.

Grammar (all keys optional unless marked)::

    name: <string>                       # required
    description: <string>
    nodes: [<int>, ...]                  # required unless given by coordinates
    coordinates: {<node>: [x, y], ...}   # alternative topology source
    link_range: <float>                  # with coordinates: link iff distance <= range
    link_success_prob: <float>           # with coordinates, default 1.0
    links:                               # explicit links (canonical)
      - [a, b, p]                        # symmetric pair
      - {src: a, dst: b, p: 0.9, p_reverse: 0.5, p_control: 0.95, directed: false, airtime_us: 185}
    flows:
      - {id: A, src: 10, dst: 17, rate_mbps: 1.0, start_s: 5, stop_s: 30}
      - {id: N, src: 3, dst: 4, rate_pps: 10}   # background-style flow
    protocols: [SRCR, CDP]
    alpha: {flow: A, path1: [10, 14, 17], path2: [10, 16, 17]}
    events:
      - {at_s: 20, src: 14, dst: 17, p: 0.0}     # scripted link change
    carrier_sense: {<node>: [<node>, ...]}      # overrides
    collision: {"<src>-<dst>": [<node>, ...]}   # overrides
    params: {<name>: <value>, ...}              # see Params

Errors are raised as :class:`ScenarioError` carrying the source line.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional

import yaml

from .phy_mac import Link, airtime_us
from .protocols import PROTOCOLS
from .traffic import Flow, FlowKind
from .engine import seconds


class ScenarioError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Params:
    duration_s: float = 180.0
    warmup_s: float = 5.0
    seed: int = 1
    beacon_interval_ms: float = 200.0
    probe_interval_ms: float = 1000.0
    gamma: float = 0.4
    hysteresis: float = 0.05
    stale_beacons: int = 5
    probe_window: int = 20
    ewma_beta: float = 0.1
    packet_size: int = 512
    buffer_capacity: int = 500
    retry_limit: Optional[int] = 7
    ttl: int = 32
    background_rate: float = 0.0
    data_rate_mbps: float = 48.0
    control_rate_mbps: float = 11.0
    mac_overhead_us: int = 100
    slot_us: int = 20
    cw_min: int = 16
    cw_max: int = 1024
    carrier_sense_hops: int = 1
    collision_hops: int = 2
    split_horizon: bool = True
    freeze_neighbors: bool = True

    @property
    def data_airtime_us(self) -> int:
        return airtime_us(self.packet_size, self.data_rate_mbps, self.mac_overhead_us)


@dataclass(frozen=True)
class FlowSpec:
    id: str
    src: int
    dst: int
    rate_mbps: Optional[float] = None
    rate_pps: Optional[float] = None
    start_s: Optional[float] = None
    stop_s: Optional[float] = None

    def to_flow(self, params: Params) -> Flow:
        start = seconds(params.warmup_s if self.start_s is None else self.start_s)
        stop = seconds(params.duration_s if self.stop_s is None else self.stop_s)
        if self.rate_pps is not None:
            return Flow(self.id, self.src, self.dst, self.rate_pps, start, stop, FlowKind.BACKGROUND)
        return Flow(self.id, self.src, self.dst, (self.rate_mbps or 0.0) * 1e6, start, stop)


@dataclass(frozen=True)
class LinkEvent:
    at_s: float
    src: int
    dst: int
    p: float


@dataclass(frozen=True)
class AlphaSpec:
    flow: str
    path1: tuple[int, ...]
    path2: tuple[int, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[int, ...]
    links: tuple[Link, ...]
    flows: tuple[FlowSpec, ...] = ()
    protocols: tuple[str, ...] = ("SRCR", "CDP")
    params: Params = field(default_factory=Params)
    description: str = ""
    alpha: Optional[AlphaSpec] = None
    events: tuple[LinkEvent, ...] = ()
    carrier_sense: tuple[tuple[int, tuple[int, ...]], ...] = ()
    collision: tuple[tuple[tuple[int, int], tuple[int, ...]], ...] = ()

    def with_params(self, **changes) -> "Scenario":
        return replace(self, params=replace(self.params, **changes))

    def with_flows(self, flows) -> "Scenario":
        return replace(self, flows=tuple(flows))

    def flow_objects(self) -> list[Flow]:
        return [f.to_flow(self.params) for f in self.flows]

    def link(self, src: int, dst: int) -> Link:
        for l in self.links:
            if l.src == src and l.dst == dst:
                return l
        raise KeyError((src, dst))


# -- YAML with line numbers ------------------------------------------------


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-5``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class _LDict(dict):
    line: Optional[int] = None


class _LList(list):
    line: Optional[int] = None


def _from_node(node: yaml.Node) -> Any:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = _LDict()
        out.line = line
        for k, v in node.value:
            out[_from_node(k)] = _from_node(v)
        return out
    if isinstance(node, yaml.SequenceNode):
        out = _LList(_from_node(v) for v in node.value)
        out.line = line
        return out
    return _scalar(node)


def _scalar(node: yaml.ScalarNode) -> Any:
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _line(obj: Any, default: Optional[int]) -> Optional[int]:
    return getattr(obj, "line", None) or default


def _num(value: Any, what: str, line: Optional[int], integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{what}: expected a number, got {value!r}", line)
    if integer and not float(value).is_integer():
        raise ScenarioError(f"{what}: expected an integer, got {value!r}", line)
    return int(value) if integer else float(value)


def _prob(value: Any, what: str, line: Optional[int]) -> float:
    p = _num(value, what, line)
    if not 0.0 <= p <= 1.0:
        raise ScenarioError(f"{what}: probability {p} outside [0, 1]", line)
    return p


_PARAM_TYPES = {f.name: f.type for f in fields(Params)}


def _parse_params(raw: Any, line: Optional[int]) -> Params:
    if raw is None:
        return Params()
    if not isinstance(raw, dict):
        raise ScenarioError("params must be a mapping", line)
    line = _line(raw, line)
    values = {}
    for key, value in raw.items():
        if key not in _PARAM_TYPES:
            raise ScenarioError(f"unknown parameter {key!r}", line)
        kind = _PARAM_TYPES[key]
        if kind == "bool":
            if not isinstance(value, bool):
                raise ScenarioError(f"{key}: expected true/false", line)
            values[key] = value
        elif key == "retry_limit" and value is None:
            values[key] = None
        elif "int" in kind:
            values[key] = _num(value, key, line, integer=True)
        else:
            values[key] = _num(value, key, line)
    params = Params(**values)
    if params.duration_s <= 0:
        raise ScenarioError("duration_s must be positive", line)
    if not 0.0 <= params.gamma <= 1.0:
        raise ScenarioError(f"gamma {params.gamma} outside [0, 1]", line)
    for key in ("beacon_interval_ms", "probe_interval_ms", "packet_size", "buffer_capacity", "ttl"):
        if getattr(params, key) <= 0:
            raise ScenarioError(f"{key} must be positive", line)
    return params


def _parse_links(doc: dict, nodes: set[int], params: Params) -> list[Link]:
    base = params.data_airtime_us
    out: dict[tuple[int, int], Link] = {}

    def add(src, dst, p, airtime, line, pc=None):
        for n in (src, dst):
            if n not in nodes:
                raise ScenarioError(f"link references unknown node {n}", line)
        if src == dst:
            raise ScenarioError(f"self-link at node {src}", line)
        if (src, dst) in out:
            raise ScenarioError(f"duplicate link {src}->{dst}", line)
        out[(src, dst)] = Link(src, dst, p, airtime, pc)

    raw_links = doc.get("links") or []
    for item in raw_links:
        line = _line(item, _line(raw_links, None))
        if isinstance(item, list):
            if len(item) != 3:
                raise ScenarioError("compact link must be [a, b, p]", line)
            a = _num(item[0], "link node", line, True)
            b = _num(item[1], "link node", line, True)
            p = _prob(item[2], "link p", line)
            add(a, b, p, base, line)
            add(b, a, p, base, line)
        elif isinstance(item, dict):
            unknown = set(item) - {"src", "dst", "p", "p_reverse", "p_control", "directed", "airtime_us"}
            if unknown:
                raise ScenarioError(f"unknown link keys {sorted(unknown)}", line)
            for key in ("src", "dst", "p"):
                if key not in item:
                    raise ScenarioError(f"link needs {key!r}", line)
            a = _num(item["src"], "src", line, True)
            b = _num(item["dst"], "dst", line, True)
            p = _prob(item["p"], "p", line)
            airtime = _num(item.get("airtime_us", base), "airtime_us", line, True)
            pc = _prob(item["p_control"], "p_control", line) if item.get("p_control") is not None else None
            add(a, b, p, airtime, line, pc)
            if not item.get("directed", False):
                pr = _prob(item.get("p_reverse", p), "p_reverse", line)
                add(b, a, pr, airtime, line, pc)
        else:
            raise ScenarioError(f"cannot read link {item!r}", line)

    coords = doc.get("coordinates")
    if coords:
        line = _line(coords, None)
        rng = doc.get("link_range")
        if rng is None:
            raise ScenarioError("coordinates need link_range", line)
        rng = _num(rng, "link_range", line)
        p = _prob(doc.get("link_success_prob", 1.0), "link_success_prob", line)
        pts = {}
        for k, v in coords.items():
            if not isinstance(v, list) or len(v) != 2:
                raise ScenarioError(f"coordinates of {k} must be [x, y]", line)
            pts[int(k)] = (_num(v[0], "x", line), _num(v[1], "y", line))
        for a in sorted(pts):
            for b in sorted(pts):
                if a != b and (a, b) not in out and math.dist(pts[a], pts[b]) <= rng:
                    out[(a, b)] = Link(a, b, p, base)
    return [out[k] for k in sorted(out)]


def _int_list(value: Any, what: str, line: Optional[int]) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ScenarioError(f"{what} must be a list", line)
    return tuple(_num(v, what, line, True) for v in value)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document, applying defaults."""
    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    if root is None:
        raise ScenarioError("empty scenario")
    doc = _from_node(root)
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping", 1)
    known = {
        "name", "description", "nodes", "coordinates", "link_range", "link_success_prob", "links",
        "flows", "protocols", "alpha", "events", "carrier_sense", "collision", "params",
    }
    for key in doc:
        if key not in known:
            raise ScenarioError(f"unknown key {key!r}", doc.line)
    if "name" not in doc:
        raise ScenarioError("scenario needs a name", doc.line)

    params = _parse_params(doc.get("params"), doc.line)
    if "nodes" in doc:
        nodes = set(_int_list(doc["nodes"], "nodes", _line(doc["nodes"], doc.line)))
    elif doc.get("coordinates"):
        nodes = {int(k) for k in doc["coordinates"]}
    else:
        raise ScenarioError("scenario needs nodes or coordinates", doc.line)
    if doc.get("coordinates"):
        missing = {int(k) for k in doc["coordinates"]} - nodes
        if missing:
            raise ScenarioError(f"coordinates for unknown nodes {sorted(missing)}", _line(doc["coordinates"], None))
    links = _parse_links(doc, nodes, params)

    flows = []
    seen_ids = set()
    raw_flows = doc.get("flows") or []
    for item in raw_flows:
        line = _line(item, _line(raw_flows, None))
        if not isinstance(item, dict):
            raise ScenarioError("flow must be a mapping", line)
        unknown = set(item) - {"id", "src", "dst", "rate_mbps", "rate_pps", "start_s", "stop_s"}
        if unknown:
            raise ScenarioError(f"unknown flow keys {sorted(unknown)}", line)
        for key in ("id", "src", "dst"):
            if key not in item:
                raise ScenarioError(f"flow needs {key!r}", line)
        fid = str(item["id"])
        if fid in seen_ids:
            raise ScenarioError(f"duplicate flow id {fid!r}", line)
        seen_ids.add(fid)
        src = _num(item["src"], "src", line, True)
        dst = _num(item["dst"], "dst", line, True)
        for n in (src, dst):
            if n not in nodes:
                raise ScenarioError(f"flow {fid} references unknown node {n}", line)
        if src == dst:
            raise ScenarioError(f"flow {fid}: source equals destination", line)
        if ("rate_mbps" in item) == ("rate_pps" in item):
            raise ScenarioError(f"flow {fid}: give exactly one of rate_mbps / rate_pps", line)
        kw = {}
        for key in ("rate_mbps", "rate_pps", "start_s", "stop_s"):
            if key in item:
                kw[key] = _num(item[key], key, line)
                if kw[key] < 0:
                    raise ScenarioError(f"flow {fid}: {key} must be non-negative", line)
        flows.append(FlowSpec(fid, src, dst, **kw))

    protocols = tuple(str(p).upper().replace("-", "") for p in doc.get("protocols", ["SRCR", "CDP"]))
    for p in protocols:
        if p not in PROTOCOLS and p != "CDPNOSH":
            raise ScenarioError(f"unknown protocol {p!r}", _line(doc.get("protocols"), doc.line))

    link_keys = {(l.src, l.dst) for l in links}

    def check_path(path, line):
        for a, b in zip(path, path[1:]):
            if (a, b) not in link_keys:
                raise ScenarioError(f"path {list(path)} uses missing link {a}->{b}", line)

    alpha = None
    if doc.get("alpha") is not None:
        raw = doc["alpha"]
        line = _line(raw, doc.line)
        if not isinstance(raw, dict) or not {"flow", "path1", "path2"} <= set(raw):
            raise ScenarioError("alpha needs flow, path1 and path2", line)
        p1 = _int_list(raw["path1"], "path1", line)
        p2 = _int_list(raw["path2"], "path2", line)
        check_path(p1, line)
        check_path(p2, line)
        flow_ids = {f.id: f for f in flows}
        fid = str(raw["flow"])
        if fid not in flow_ids:
            raise ScenarioError(f"alpha references unknown flow {fid!r}", line)
        f = flow_ids[fid]
        for p in (p1, p2):
            if p[0] != f.src or p[-1] != f.dst:
                raise ScenarioError(f"path {list(p)} does not join {f.src} to {f.dst}", line)
        if set(p1[1:-1]) & set(p2[1:-1]):
            raise ScenarioError("alpha paths share a relay", line)
        alpha = AlphaSpec(fid, p1, p2)

    events = []
    raw_events = doc.get("events") or []
    for item in raw_events:
        line = _line(item, _line(raw_events, None))
        if not isinstance(item, dict) or not {"at_s", "src", "dst", "p"} <= set(item):
            raise ScenarioError("event needs at_s, src, dst, p", line)
        ev = LinkEvent(
            _num(item["at_s"], "at_s", line),
            _num(item["src"], "src", line, True),
            _num(item["dst"], "dst", line, True),
            _prob(item["p"], "p", line),
        )
        if (ev.src, ev.dst) not in link_keys:
            raise ScenarioError(f"event on missing link {ev.src}->{ev.dst}", line)
        events.append(ev)

    cs = []
    raw_cs = doc.get("carrier_sense") or {}
    for k, v in raw_cs.items():
        line = _line(raw_cs, None)
        members = _int_list(v, "carrier_sense", line)
        for n in (int(k), *members):
            if n not in nodes:
                raise ScenarioError(f"carrier_sense references unknown node {n}", line)
        cs.append((int(k), tuple(sorted(members))))
    coll = []
    raw_coll = doc.get("collision") or {}
    for k, v in raw_coll.items():
        line = _line(raw_coll, None)
        try:
            a, b = (int(x) for x in str(k).split("-"))
        except ValueError:
            raise ScenarioError(f"collision key {k!r} must look like 'src-dst'", line) from None
        if (a, b) not in link_keys:
            raise ScenarioError(f"collision override for missing link {a}->{b}", line)
        members = _int_list(v, "collision", line)
        for n in members:
            if n not in nodes:
                raise ScenarioError(f"collision references unknown node {n}", line)
        coll.append(((a, b), tuple(sorted(members))))

    return Scenario(
        name=str(doc["name"]),
        nodes=tuple(sorted(nodes)),
        links=tuple(links),
        flows=tuple(flows),
        protocols=protocols,
        params=params,
        description=str(doc.get("description", "")),
        alpha=alpha,
        events=tuple(events),
        carrier_sense=tuple(sorted(cs)),
        collision=tuple(sorted(coll)),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    """Canonical, fully expanded form (every link directed, every parameter explicit)."""
    doc: dict[str, Any] = {"name": sc.name}
    if sc.description:
        doc["description"] = sc.description
    doc["nodes"] = list(sc.nodes)
    doc["links"] = [
        dict(
            {"src": l.src, "dst": l.dst, "p": l.success_prob, "directed": True, "airtime_us": l.base_airtime},
            **({} if l.control_prob is None else {"p_control": l.control_prob}),
        )
        for l in sc.links
    ]
    flows = []
    for f in sc.flows:
        item = {k: v for k, v in asdict(f).items() if v is not None}
        flows.append(item)
    doc["flows"] = flows
    doc["protocols"] = list(sc.protocols)
    if sc.alpha is not None:
        doc["alpha"] = {"flow": sc.alpha.flow, "path1": list(sc.alpha.path1), "path2": list(sc.alpha.path2)}
    if sc.events:
        doc["events"] = [asdict(e) for e in sc.events]
    if sc.carrier_sense:
        doc["carrier_sense"] = {k: list(v) for k, v in sc.carrier_sense}
    if sc.collision:
        doc["collision"] = {f"{a}-{b}": list(v) for (a, b), v in sc.collision}
    doc["params"] = asdict(sc.params)
    return doc


def serialize_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def builtin_scenario(name: str) -> Scenario:
    """Load one of the example scenarios shipped with the package."""
    from importlib import resources

    ref = resources.files("meshroute") / "scenarios" / f"{name}.yaml"
    return parse_scenario(ref.read_text(encoding="utf-8"))


def builtin_names() -> list[str]:
    from importlib import resources

    return sorted(p.name[:-5] for p in (resources.files("meshroute") / "scenarios").iterdir() if p.name.endswith(".yaml"))
