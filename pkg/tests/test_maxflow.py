import itertools
import math

import numpy as np
import pytest

from kidneycut import maxflow
from kidneycut.errors import UnboundedFlowError


def brute_force_min_cut(n, tlinks, nlinks):
    """Enumerate all 2^n labelings; the cut-capacity oracle."""
    best = math.inf
    for bits in itertools.product((False, True), repeat=n):
        cap = 0.0
        for i, (cs, ct) in enumerate(tlinks):
            cap += ct if bits[i] else cs
        for u, v, cuv, cvu in nlinks:
            if bits[u] and not bits[v]:
                cap += cuv
            if bits[v] and not bits[u]:
                cap += cvu
        best = min(best, cap)
    return best


def random_graph(rng):
    n = int(rng.integers(1, 9))
    n_arcs = int(rng.integers(0, 17))
    tlinks = [(float(rng.integers(0, 11)), float(rng.integers(0, 11))) for _ in range(n)]
    nlinks = [
        (int(rng.integers(0, n)), int(rng.integers(0, n)),
         float(rng.integers(0, 11)), float(rng.integers(0, 11)))
        for _ in range(n_arcs)
    ]
    g = maxflow.FlowGraph()
    g.add_nodes(n)
    for i, (cs, ct) in enumerate(tlinks):
        g.add_tlink(i, cs, ct)
    for u, v, cuv, cvu in nlinks:
        g.add_nlink(u, v, cuv, cvu)
    return g, n, tlinks, nlinks


class TestBasics:
    def test_infinite_source_seed_stays_s(self):
        g = maxflow.FlowGraph()
        p = g.add_node()
        q = g.add_node()
        g.add_tlink(p, maxflow.INFINITE, 0)
        g.add_tlink(q, 0, 2)
        g.add_nlink(p, q, 1, 1)
        cut = g.max_flow()
        assert cut.source_side[p]
        assert cut.side(p) == "S"

    def test_zero_capacity_nlink_no_effect(self):
        g = maxflow.FlowGraph()
        p, q = g.add_node(), g.add_node()
        g.add_tlink(p, 4, 0)
        g.add_tlink(q, 0, 4)
        base = g.max_flow().flow_value
        g.add_nlink(p, q, 0, 0)
        assert g.max_flow().flow_value == base == 0.0

    def test_two_node_bridge(self):
        g = maxflow.FlowGraph()
        p, q = g.add_node(), g.add_node()
        g.add_nlink(p, q, 5, 5)
        g.add_tlink(p, maxflow.INFINITE, 0)
        g.add_tlink(q, 0, maxflow.INFINITE)
        cut = g.max_flow()
        assert cut.flow_value == 5.0
        assert cut.source_side.tolist() == [True, False]

    def test_diamond(self):
        # s->a(3), s->b(2), a->t(2), b->t(3), a->b(1 one-way): max flow 5
        g = maxflow.FlowGraph()
        a, b = g.add_node(), g.add_node()
        g.add_tlink(a, 3, 2)
        g.add_tlink(b, 2, 3)
        g.add_nlink(a, b, 1, 0)
        assert g.max_flow().flow_value == 5.0
        assert brute_force_min_cut(2, [(3, 2), (2, 3)], [(0, 1, 1, 0)]) == 5.0

    def test_single_node(self):
        g = maxflow.FlowGraph()
        p = g.add_node()
        g.add_tlink(p, 3, 1)
        cut = g.max_flow()
        assert cut.flow_value == 1.0
        assert cut.source_side[p]

    def test_empty_graph(self):
        assert maxflow.FlowGraph().max_flow().flow_value == 0.0

    def test_tlink_accumulation(self):
        g = maxflow.FlowGraph()
        p = g.add_node()
        g.add_tlink(p, 1, 0)
        g.add_tlink(p, 2, 4)
        assert g.max_flow().flow_value == 3.0

    def test_invalid_node(self):
        g = maxflow.FlowGraph()
        g.add_node()
        with pytest.raises(ValueError):
            g.add_nlink(0, 5, 1, 1)
        with pytest.raises(ValueError):
            g.add_tlink(-1, 1, 0)

    def test_negative_capacity(self):
        g = maxflow.FlowGraph()
        p, q = g.add_node(), g.add_node()
        with pytest.raises(ValueError):
            g.add_nlink(p, q, -1, 0)
        with pytest.raises(ValueError):
            g.add_tlink(p, float("nan"), 0)

    def test_unbounded_both_terminals(self):
        g = maxflow.FlowGraph()
        p = g.add_node()
        g.add_tlink(p, maxflow.INFINITE, maxflow.INFINITE)
        with pytest.raises(UnboundedFlowError):
            g.max_flow()

    def test_unbounded_infinite_path(self):
        g = maxflow.FlowGraph()
        p, q = g.add_node(), g.add_node()
        g.add_tlink(p, maxflow.INFINITE, 0)
        g.add_tlink(q, 0, maxflow.INFINITE)
        g.add_nlink(p, q, maxflow.INFINITE, 0)
        with pytest.raises(UnboundedFlowError):
            g.max_flow()
        with pytest.raises(UnboundedFlowError):
            g.max_flow(method="bfs")


class TestOracle:
    def test_200_random_graphs_exact(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            g, n, tlinks, nlinks = random_graph(rng)
            want = brute_force_min_cut(n, tlinks, nlinks)
            assert g.max_flow().flow_value == want

    def test_bfs_reference_agrees(self):
        rng = np.random.default_rng(43)
        for _ in range(60):
            g, n, tlinks, nlinks = random_graph(rng)
            bk = g.max_flow().flow_value
            bfs = g.max_flow(method="bfs").flow_value
            assert bk == pytest.approx(bfs, abs=1e-9)

    def test_flow_equals_cut_capacity_real_caps(self):
        rng = np.random.default_rng(44)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            g = maxflow.FlowGraph()
            g.add_nodes(n)
            for i in range(n):
                g.add_tlink(i, float(rng.random() * 5), float(rng.random() * 5))
            for _ in range(int(rng.integers(0, 14))):
                g.add_nlink(int(rng.integers(0, n)), int(rng.integers(0, n)),
                            float(rng.random() * 5), float(rng.random() * 5))
            cut = g.max_flow()
            assert cut.flow_value == pytest.approx(g.cut_capacity(cut.source_side), abs=1e-9)

    def test_flow_conservation(self):
        rng = np.random.default_rng(45)
        for _ in range(20):
            g, n, tlinks, nlinks = random_graph(rng)
            first, heads, nxt, caps = g._arrays()
            cap_s = np.array([t[0] for t in tlinks])
            cap_t = np.array([t[1] for t in tlinks])
            excess = cap_s - cap_t
            rcap = caps.copy()
            maxflow._bk_solve(first, heads, nxt, rcap, excess)
            arc_flow = caps - rcap  # net flow on each directed arc
            tails = np.asarray(g._tails)
            for i in range(n):
                out_flow = arc_flow[tails == i].sum()
                # terminal flow: what left through t minus what arrived from s
                t_in = min(cap_s[i], cap_t[i])  # pre-routed base flow cancels
                src_used = (cap_s[i] - t_in) - max(excess[i], 0.0)
                snk_used = (cap_t[i] - t_in) - max(-excess[i], 0.0)
                assert out_flow == pytest.approx(src_used - snk_used, abs=1e-9)

    def test_determinism(self):
        rng1 = np.random.default_rng(46)
        rng2 = np.random.default_rng(46)
        for _ in range(20):
            g1, *_ = random_graph(rng1)
            g2, *_ = random_graph(rng2)
            c1 = g1.max_flow()
            c2 = g2.max_flow()
            assert c1.flow_value == c2.flow_value
            assert np.array_equal(c1.source_side, c2.source_side)

    def test_unreachable_node_defaults_t(self):
        g = maxflow.FlowGraph()
        p = g.add_node()
        q = g.add_node()  # no t-links, no arcs
        g.add_tlink(p, 1, 2)
        cut = g.max_flow()
        assert not cut.source_side[q]


class TestDimacs:
    def test_round_trip_flow(self):
        rng = np.random.default_rng(47)
        for _ in range(10):
            g, *_ = random_graph(rng)
            text = maxflow.to_dimacs(g)
            g2 = maxflow.from_dimacs(text)
            assert g2.max_flow().flow_value == pytest.approx(g.max_flow().flow_value, abs=1e-12)

    def test_infinite_caps_survive(self):
        g = maxflow.FlowGraph()
        p, q = g.add_node(), g.add_node()
        g.add_tlink(p, maxflow.INFINITE, 0)
        g.add_tlink(q, 0, maxflow.INFINITE)
        g.add_nlink(p, q, 2, 0)
        g2 = maxflow.from_dimacs(maxflow.to_dimacs(g))
        assert g2.max_flow().flow_value == 2.0
