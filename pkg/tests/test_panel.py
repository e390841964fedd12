import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netcontagion.errors import DataError, PanelFormatError
from netcontagion.panel import (
    EARTH_RADIUS_MILES,
    NodeInfo,
    Panel,
    TieRecord,
    add_ties,
    build_snapshot_from_edges,
    classify_friendship,
    degree_stats,
    derive_neighbor_ties,
    geodesic_distances,
    geographic_distance,
    haversine_miles,
    load_panel,
    snapshot,
    write_panel,
)


def floyd_warshall(nodes, edges):
    """All-pairs shortest paths by the O(n^3) recurrence; reference oracle."""
    inf = float("inf")
    dist = {a: {b: (0 if a == b else inf) for b in nodes} for a in nodes}
    for a, b in edges:
        dist[a][b] = 1
        dist[b][a] = 1
    for k in nodes:
        for i in nodes:
            dik = dist[i][k]
            if dik == inf:
                continue
            for j in nodes:
                alt = dik + dist[k][j]
                if alt < dist[i][j]:
                    dist[i][j] = alt
    return dist


def random_edges(rng, n, p):
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j))
    return edges


class TestLoading:
    def test_toy_panel_loads(self, toy_panel):
        assert set(toy_panel.nodes) == {"n1", "n2", "n3", "n4"}
        assert toy_panel.nodes["n1"] == NodeInfo(in_sample=True, sex="F", birth_year=1952)
        assert not toy_panel.nodes["n4"].in_sample
        assert len(toy_panel.ties) == 3
        assert len(toy_panel.traits) == 8
        assert toy_panel.n_waves == 3
        assert toy_panel.trait_names == ["obese", "smokes"]

    def test_trait_values(self, toy_panel):
        assert toy_panel.trait_values("obese", 1) == {"n1": 1.0, "n2": 0.0, "n3": 0.0}
        assert toy_panel.trait_values("obese", 2) == {"n1": 1.0, "n2": 1.0, "n3": 0.0}
        assert toy_panel.trait_values("smokes", 2) == {}

    def test_covariate_resolution(self, toy_panel):
        # time-varying trait wins; static birth_year as fallback
        assert toy_panel.covariate_at("n1", 1, "smokes") == 1.0
        assert toy_panel.covariate_at("n1", 1, "birth_year") == 1952.0
        assert toy_panel.covariate_at("n1", 1, "sex") is None  # non-numeric coding
        assert toy_panel.covariate_kind("smokes") == "time-varying"
        assert toy_panel.covariate_kind("birth_year") == "static"

    def test_round_trip(self, toy_panel, tmp_path):
        paths = [tmp_path / name for name in ("n.csv", "t.csv", "tr.csv", "g.csv")]
        write_panel(toy_panel, *paths)
        again = load_panel(*paths)
        assert again.nodes == toy_panel.nodes
        assert set(again.ties) == set(toy_panel.ties)
        assert again.traits == toy_panel.traits
        assert again.geo == toy_panel.geo

    def test_missing_column_reports_file(self, tmp_path, toy_paths):
        bad = tmp_path / "nodes.csv"
        bad.write_text("id,in_sample\nn1,1\n")
        with pytest.raises(PanelFormatError) as err:
            load_panel(bad, *toy_paths[1:])
        assert "node_id" in str(err.value)
        assert "nodes.csv" in str(err.value)

    def test_dangling_tie_reference(self, tmp_path, toy_paths):
        bad = tmp_path / "ties.csv"
        bad.write_text(
            "ego_id,alter_id,tie_type,wave_first,wave_last,nominated_by_ego\n"
            "n1,n9,friend,1,2,1\n"
        )
        with pytest.raises(PanelFormatError) as err:
            load_panel(toy_paths[0], bad, toy_paths[2], toy_paths[3])
        assert "n9" in str(err.value)
        assert "ties.csv:2" in str(err.value)

    def test_duplicate_trait_row(self, tmp_path, toy_paths):
        bad = tmp_path / "traits.csv"
        bad.write_text(
            "node_id,wave,trait,value\nn1,1,obese,1\nn1,1,obese,0\n"
        )
        with pytest.raises(PanelFormatError) as err:
            load_panel(toy_paths[0], toy_paths[1], bad, toy_paths[3])
        assert "traits.csv:3" in str(err.value)

    def test_bad_wave_value(self, tmp_path, toy_paths):
        bad = tmp_path / "traits.csv"
        bad.write_text("node_id,wave,trait,value\nn1,one,obese,1\n")
        with pytest.raises(PanelFormatError) as err:
            load_panel(toy_paths[0], toy_paths[1], bad, toy_paths[3])
        assert "wave" in str(err.value)

    def test_trait_for_out_of_sample_node_rejected(self, tmp_path, toy_paths):
        bad = tmp_path / "traits.csv"
        bad.write_text("node_id,wave,trait,value\nn4,1,obese,1\n")
        with pytest.raises(PanelFormatError):
            load_panel(toy_paths[0], toy_paths[1], bad, toy_paths[3])

    def test_inverted_wave_span_rejected(self, tmp_path, toy_paths):
        bad = tmp_path / "ties.csv"
        bad.write_text(
            "ego_id,alter_id,tie_type,wave_first,wave_last,nominated_by_ego\n"
            "n1,n2,friend,3,1,1\n"
        )
        with pytest.raises(PanelFormatError):
            load_panel(toy_paths[0], bad, toy_paths[2], toy_paths[3])

    def test_self_tie_rejected(self):
        with pytest.raises(DataError):
            TieRecord("a", "a", "friend", 1, 1)

    def test_unknown_tie_type_rejected(self):
        with pytest.raises(DataError):
            TieRecord("a", "b", "acquaintance", 1, 1)


class TestSnapshot:
    def test_activity_window_closed(self, toy_panel):
        # n2-n3 friend tie spans waves 1..2 only
        assert snapshot(toy_panel, 1).has_edge("n2", "n3")
        assert snapshot(toy_panel, 2).has_edge("n2", "n3")
        assert not snapshot(toy_panel, 3).has_edge("n2", "n3")

    def test_isolates_kept(self, toy_panel):
        snap = snapshot(toy_panel, 3)
        assert "n2" in snap.nodes  # n2 has only the n1 friendship at wave 3
        assert snap.degree("n4") == 1

    def test_tie_filter(self, toy_panel):
        snap = snapshot(toy_panel, 1, tie_filter=["friend"])
        assert snap.has_edge("n1", "n2")
        assert not snap.has_edge("n3", "n4")
        with pytest.raises(DataError):
            snapshot(toy_panel, 1, tie_filter=["bff"])

    def test_wave_out_of_range(self, toy_panel):
        with pytest.raises(DataError):
            snapshot(toy_panel, 0)
        with pytest.raises(DataError):
            snapshot(toy_panel, 4)

    def test_nomination_orientation(self, toy_panel):
        snap = snapshot(toy_panel, 1)
        # n1 named n2 (nominated_by_ego=1); n3 named n2 (stored with ego=n2,
        # nominated_by_ego=0)
        assert ("n1", "n2") in snap.nominations
        assert ("n2", "n1") not in snap.nominations
        assert ("n3", "n2") in snap.nominations
        assert ("n2", "n3") not in snap.nominations

    def test_edge_types_collapse(self):
        nodes = {"a": NodeInfo(), "b": NodeInfo()}
        ties = (
            TieRecord("a", "b", "friend", 1, 2),
            TieRecord("b", "a", "coworker", 1, 1),
        )
        panel = Panel(nodes=nodes, ties=ties)
        snap = snapshot(panel, 1)
        assert snap.n_edges == 1
        assert snap.edge_types[("a", "b")] == ("coworker", "friend")

    def test_neighbor_lists_sorted(self, toy_panel):
        snap = snapshot(toy_panel, 1)
        for nbrs in snap.neighbors.values():
            assert list(nbrs) == sorted(nbrs)


class TestGeodesics:
    def test_path_graph_distances(self):
        snap = build_snapshot_from_edges(1, range(4), [(0, 1), (1, 2), (2, 3)])
        assert geodesic_distances(snap, 0) == {0: 0, 1: 1, 2: 2, 3: 3}
        assert geodesic_distances(snap, 0, max_d=2) == {0: 0, 1: 1, 2: 2}

    def test_disconnected_absent(self):
        snap = build_snapshot_from_edges(1, range(4), [(0, 1)])
        d = geodesic_distances(snap, 0)
        assert 2 not in d and 3 not in d

    def test_unknown_source(self):
        snap = build_snapshot_from_edges(1, range(3), [(0, 1)])
        with pytest.raises(DataError):
            geodesic_distances(snap, 99)

    def test_matches_floyd_warshall(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(2, 14))
            edges = random_edges(rng, n, 0.3)
            snap = build_snapshot_from_edges(1, range(n), edges)
            oracle = floyd_warshall(list(range(n)), edges)
            for src in range(n):
                got = geodesic_distances(snap, src)
                want = {v: d for v, d in oracle[src].items() if d != float("inf")}
                assert got == want

    def test_cutoff_is_filtration(self):
        rng = np.random.default_rng(11)
        edges = random_edges(rng, 12, 0.25)
        snap = build_snapshot_from_edges(1, range(12), edges)
        full = geodesic_distances(snap, 0)
        for k in range(4):
            cut = geodesic_distances(snap, 0, max_d=k)
            assert cut == {v: d for v, d in full.items() if d <= k}


class TestFriendshipClasses:
    def make_snap(self, nominations):
        return build_snapshot_from_edges(
            1, ["a", "b"], [("a", "b")], nominations=nominations
        )

    def test_all_classes(self):
        assert classify_friendship(self.make_snap({("a", "b"), ("b", "a")}), "a", "b") == "mutual"
        assert classify_friendship(self.make_snap({("a", "b")}), "a", "b") == "ego_perceived"
        assert classify_friendship(self.make_snap({("b", "a")}), "a", "b") == "alter_perceived"
        assert classify_friendship(self.make_snap(set()), "a", "b") == "none"

    def test_perspective_flips(self):
        snap = self.make_snap({("a", "b")})
        assert classify_friendship(snap, "b", "a") == "alter_perceived"

    def test_unknown_node(self):
        with pytest.raises(DataError):
            classify_friendship(self.make_snap(set()), "a", "z")


class TestGeography:
    def test_half_circumference(self):
        # antipodal along the equator: half the great circle
        d = haversine_miles(0.0, 0.0, 0.0, 180.0)
        assert d == pytest.approx(12436.97, abs=0.5)
        assert d == pytest.approx(math.pi * EARTH_RADIUS_MILES, rel=1e-12)

    def test_symmetry_and_zero(self):
        assert haversine_miles(42.3, -71.1, 42.3, -71.1) == 0.0
        a = haversine_miles(42.3, -71.1, 40.7, -74.0)
        b = haversine_miles(40.7, -74.0, 42.3, -71.1)
        assert a == pytest.approx(b, rel=1e-12)
        # Boston to New York is about 190 miles
        assert 150 < a < 230

    def test_one_degree_longitude_at_equator(self):
        # arc length R * (pi/180)
        d = haversine_miles(0.0, 0.0, 0.0, 1.0)
        assert d == pytest.approx(EARTH_RADIUS_MILES * math.pi / 180.0, rel=1e-10)

    def test_panel_lookup(self, toy_panel):
        d = geographic_distance(toy_panel, "n1", "n2", 1)
        assert 0.3 < d < 0.8  # one hundredth of a degree longitude near 42N
        with pytest.raises(DataError):
            geographic_distance(toy_panel, "n1", "n4", 1)
        with pytest.raises(DataError):
            geographic_distance(toy_panel, "n1", "n2", 2)


class TestDerivedNeighbors:
    def test_radius_and_span_merge(self):
        # ~55 m apart (within the 100 m default) at waves 1, 2, and 4;
        # a third node ~1.1 km away never qualifies
        nodes = {"a": NodeInfo(), "b": NodeInfo(), "c": NodeInfo()}
        geo = {}
        for w in (1, 2, 4):
            geo[("a", w)] = (0.0, 0.0)
            geo[("b", w)] = (0.0005, 0.0)
            geo[("c", w)] = (0.01, 0.0)
        panel = Panel(nodes=nodes, geo=geo)
        ties = derive_neighbor_ties(panel)
        assert ties == [
            TieRecord("a", "b", "neighbor", 1, 2),
            TieRecord("a", "b", "neighbor", 4, 4),
        ]
        grown = add_ties(panel, ties)
        assert snapshot(grown, 1).has_edge("a", "b")

    def test_radius_is_meters(self):
        nodes = {"a": NodeInfo(), "b": NodeInfo()}
        geo = {("a", 1): (0.0, 0.0), ("b", 1): (0.002, 0.0)}  # ~222 m apart
        panel = Panel(nodes=nodes, geo=geo)
        assert derive_neighbor_ties(panel, radius_meters=100.0) == []
        assert len(derive_neighbor_ties(panel, radius_meters=300.0)) == 1
        with pytest.raises(DataError):
            derive_neighbor_ties(panel, radius_meters=-1.0)


class TestDegreeStats:
    def test_snapshot_stats(self, toy_panel):
        stats = degree_stats(snapshot(toy_panel, 1))
        assert stats["n_nodes"] == 4
        assert stats["n_edges"] == 3
        assert stats["mean_degree"] == pytest.approx(1.5)
        assert stats["per_tie_type"] == {"friend": 2, "spouse": 1}
        assert stats["pct_with_friend"] == pytest.approx(75.0)

    def test_panel_stats(self, toy_panel):
        stats = degree_stats(toy_panel)
        assert stats["n_subjects"] == 3
        # n1: 1 partnership, n2: 2, n3: 2 (friend n2, spouse n4)
        assert stats["mean_ties_per_subject"] == pytest.approx(5 / 3)
        assert stats["median_ties_per_subject"] == 2
        assert stats["pct_with_friend"] == pytest.approx(100.0)

    def test_wrong_type(self):
        with pytest.raises(TypeError):
            degree_stats([1, 2, 3])


@given(
    edges=st.lists(
        st.tuples(st.integers(0, 9), st.integers(0, 9)).filter(lambda e: e[0] != e[1]),
        max_size=25,
    ),
    source=st.integers(0, 9),
)
@settings(max_examples=60, deadline=None)
def test_bfs_invariants(edges, source):
    snap = build_snapshot_from_edges(1, range(10), edges)
    dist = geodesic_distances(snap, source)
    assert dist[source] == 0
    # each reached node at d > 0 has a neighbor at d - 1
    for v, d in dist.items():
        if d > 0:
            assert any(dist.get(u) == d - 1 for u in snap.neighbors[v])
    # distance is symmetric on an undirected graph
    for v, d in dist.items():
        assert geodesic_distances(snap, v).get(source) == d


@given(
    spans=st.lists(
        st.tuples(st.integers(1, 5), st.integers(0, 3)), min_size=1, max_size=8
    )
)
@settings(max_examples=40, deadline=None)
def test_snapshot_edge_iff_active_span(spans):
    nodes = {i: NodeInfo() for i in range(len(spans) + 1)}
    ties = tuple(
        TieRecord(i, i + 1, "friend", first, first + length)
        for i, (first, length) in enumerate(spans)
    )
    panel = Panel(nodes=nodes, ties=ties)
    for wave in range(1, panel.n_waves + 1):
        snap = snapshot(panel, wave)
        for i, (first, length) in enumerate(spans):
            assert snap.has_edge(i, i + 1) == (first <= wave <= first + length)
