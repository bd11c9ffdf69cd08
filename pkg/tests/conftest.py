from __future__ import annotations

import pytest
from hypothesis import strategies as st

from capstore.hypergraph import ForbiddenSet, Hyperarc, Hypergraph


def arc(sources, targets, **kw) -> Hyperarc:
    return Hyperarc(frozenset(sources), frozenset(targets), **kw)


def saturate(graph: Hypergraph, caps) -> frozenset[str]:
    """Reference closure: sweep every arc until nothing changes."""
    held = set(caps)
    changed = True
    while changed:
        changed = False
        for a in graph.arcs:
            if a.sources <= held and not a.targets <= held:
                held |= a.targets
                changed = True
    return frozenset(held)


@pytest.fixture
def toy() -> Hypergraph:
    return Hypergraph(["a", "b", "c", "d"], [arc("ab", "c"), arc("c", "d")])


@pytest.fixture
def leak() -> tuple[Hypergraph, ForbiddenSet]:
    g = Hypergraph(["read_PII", "query_db", "gen", "f_leak"], [arc({"read_PII", "gen"}, {"f_leak"})])
    return g, ForbiddenSet(frozenset({"f_leak"}))


HOTEL_PRE = ("hotel-candidates-retrieved", "hotel-name", "hotel-day", "hotel-people", "hotel-stay")


@pytest.fixture
def hotel() -> tuple[Hypergraph, ForbiddenSet]:
    g = Hypergraph(list(HOTEL_PRE) + ["hotel-booked"], [arc(HOTEL_PRE, {"hotel-booked"})])
    return g, ForbiddenSet(frozenset({"hotel-booked"}))


@st.composite
def graphs(draw, max_n: int = 12, max_m: int = 20, max_fan: int = 4):
    n = draw(st.integers(1, max_n))
    nodes = [f"v{i}" for i in range(n)]
    m = draw(st.integers(0, max_m))
    arcs = []
    for _ in range(m):
        k = draw(st.integers(1, min(max_fan, n)))
        src = draw(st.sets(st.sampled_from(nodes), min_size=1, max_size=k))
        tgt = draw(st.sets(st.sampled_from(nodes), min_size=1, max_size=2))
        arcs.append(arc(src, tgt))
    return Hypergraph(nodes, arcs)


@st.composite
def graph_and_set(draw, **kw):
    g = draw(graphs(**kw))
    a = draw(st.sets(st.sampled_from(g.nodes)))
    return g, frozenset(a)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
