import pytest
from hypothesis import given, settings, strategies as st

from meshroute.scenario import (
    Params,
    ScenarioError,
    builtin_names,
    builtin_scenario,
    parse_scenario,
    serialize_scenario,
)

from conftest import make_scenario

MINIMAL = """
name: pair
nodes: [1, 2]
links:
  - [1, 2, 0.9]
"""


def test_minimal_scenario_gets_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.params == Params()
    p = sc.params
    assert (p.beacon_interval_ms, p.probe_interval_ms, p.gamma) == (200.0, 1000.0, 0.4)
    assert (p.packet_size, p.duration_s, p.data_rate_mbps, p.control_rate_mbps) == (512, 180.0, 48.0, 11.0)
    assert [(l.src, l.dst, l.success_prob) for l in sc.links] == [(1, 2, 0.9), (2, 1, 0.9)]


def test_bad_probability_reports_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL + "  - [2, 1, 1.2]\n")
    assert err.value.line == 6
    assert "1.2" in str(err.value)


@pytest.mark.parametrize(
    "extra",
    [
        "flows:\n  - {id: F, src: 1, dst: 9, rate_mbps: 1}\n",
        "params: {duration_s: 0}\n",
        "params: {gamma: 2}\n",
        "params: {nonsense: 1}\n",
        "protocols: [OSPF]\n",
        "colour: blue\n",
    ],
)
def test_invalid_documents(extra):
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL + extra)


def test_malformed_yaml():
    with pytest.raises(ScenarioError):
        parse_scenario("name: x\nnodes: [1, 2\n")


def test_directed_and_reverse_links():
    sc = make_scenario(
        """
        name: d
        nodes: [1, 2, 3]
        links:
          - {src: 1, dst: 2, p: 0.9, p_reverse: 0.5}
          - {src: 2, dst: 3, p: 0.8, directed: true, airtime_us: 400}
        """
    )
    assert sc.link(2, 1).success_prob == 0.5
    assert sc.link(2, 3).base_airtime == 400
    with pytest.raises(KeyError):
        sc.link(3, 2)


def test_coordinates_with_range():
    sc = make_scenario(
        """
        name: grid
        coordinates: {1: [0, 0], 2: [10, 0], 3: [30, 0]}
        link_range: 15
        link_success_prob: 0.7
        """
    )
    assert sc.nodes == (1, 2, 3)
    assert {(l.src, l.dst) for l in sc.links} == {(1, 2), (2, 1)}


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_round_trip(name):
    sc = builtin_scenario(name)
    assert parse_scenario(serialize_scenario(sc)) == sc


probs = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 6),
    data=st.data(),
    gamma=probs,
    dur=st.floats(0.5, 500, allow_nan=False),
    retry=st.one_of(st.none(), st.integers(0, 10)),
)
def test_round_trip_property(n, data, gamma, dur, retry):
    lines = [f"name: h{n}", f"nodes: {list(range(1, n + 1))}", "links:"]
    for a in range(1, n):
        lines.append(f"  - [{a}, {a + 1}, {data.draw(probs)!r}]")
    lines.append("flows:")
    lines.append(f"  - {{id: F, src: 1, dst: {n}, rate_mbps: {data.draw(st.floats(0, 7))!r}}}")
    retry_s = "null" if retry is None else retry
    lines.append(f"params: {{gamma: {gamma!r}, duration_s: {dur!r}, retry_limit: {retry_s}}}")
    sc = parse_scenario("\n".join(lines) + "\n")
    assert parse_scenario(serialize_scenario(sc)) == sc


def test_alpha_paths_must_be_disjoint():
    text = """
name: a
nodes: [1, 2, 3]
links: [[1, 2, 1.0], [2, 3, 1.0]]
flows: [{id: F, src: 1, dst: 3, rate_mbps: 1}]
alpha: {flow: F, path1: [1, 2, 3], path2: [1, 2, 3]}
"""
    with pytest.raises(ScenarioError, match="share a relay"):
        parse_scenario(text)


def test_exponent_floats_without_dot():
    sc = parse_scenario(MINIMAL + "flows: [{id: F, src: 1, dst: 2, rate_mbps: 1e-3}]\nparams: {gamma: 4e-1}\n")
    assert sc.flows[0].rate_mbps == 0.001 and sc.params.gamma == 0.4
