import dataclasses

import numpy as np
import pytest

from netcontagion.cluster import risk_ratio_at_distance
from netcontagion.errors import DataError
from netcontagion.gee import ModelSpec, build_dyad_rows, fit_gee
from netcontagion.panel import build_snapshot_from_edges, geodesic_distances, snapshot
from netcontagion.simulate import (
    ABMSpec,
    SyntheticNetworkSpec,
    abm_generate_panel,
    generate_network,
    path_bias_experiment,
    sample_network,
    simulate_spread,
    validation_harness,
)


def er(n, p, seed=0):
    return SyntheticNetworkSpec("erdos_renyi", n, {"p": p}, seed=seed)


def ws(n, k, beta, seed=0):
    return SyntheticNetworkSpec("watts_strogatz", n, {"k": k, "beta": beta}, seed=seed)


class TestNetworkSpec:
    def test_unknown_generator(self):
        with pytest.raises(DataError, match="generator"):
            SyntheticNetworkSpec("barabasi", 10, {})

    def test_er_needs_p(self):
        with pytest.raises(DataError):
            SyntheticNetworkSpec("erdos_renyi", 10, {})
        with pytest.raises(DataError):
            SyntheticNetworkSpec("erdos_renyi", 10, {"p": 1.5})

    def test_ws_validation(self):
        with pytest.raises(DataError):
            SyntheticNetworkSpec("watts_strogatz", 10, {"k": 10, "beta": 0.1})
        with pytest.raises(DataError):
            SyntheticNetworkSpec("watts_strogatz", 10, {"k": 4, "beta": 2.0})

    def test_configuration_validation(self):
        with pytest.raises(DataError, match="even"):
            SyntheticNetworkSpec("configuration_model", 3, {"degrees": [1, 1, 1]})
        with pytest.raises(DataError, match="one degree per node"):
            SyntheticNetworkSpec("configuration_model", 3, {"degrees": [2, 2]})

    def test_round_trip(self):
        spec = ws(100, 6, 0.1, seed=7)
        assert SyntheticNetworkSpec.from_dict(spec.to_dict()) == spec


class TestGenerateNetwork:
    def test_er_p_zero_has_no_edges(self):
        snap = generate_network(er(20, 0.0))
        assert snap.n_edges == 0
        assert len(snap.nodes) == 20

    def test_er_p_one_is_complete(self):
        snap = generate_network(er(10, 1.0))
        assert snap.n_edges == 45

    def test_ws_mean_degree_exact(self):
        # ring rewiring moves edges but never changes their count
        snap = generate_network(ws(1000, 10, 0.1))
        degrees = [snap.degree(v) for v in snap.nodes]
        assert sum(degrees) / len(degrees) == pytest.approx(10.0)
        assert snap.n_edges == 5000

    def test_configuration_model_simple(self):
        spec = SyntheticNetworkSpec(
            "configuration_model", 30, {"degrees": [4] * 30}, seed=3
        )
        snap = generate_network(spec)
        for v in snap.nodes:
            assert v not in snap.neighbors[v]
            assert snap.degree(v) <= 4

    def test_deterministic(self):
        a = generate_network(ws(200, 6, 0.2, seed=5))
        b = generate_network(ws(200, 6, 0.2, seed=5))
        assert a.neighbors == b.neighbors

    def test_seed_changes_edges(self):
        a = generate_network(er(50, 0.2, seed=1))
        b = generate_network(er(50, 0.2, seed=2))
        assert a.neighbors != b.neighbors


def path_graph(n):
    return build_snapshot_from_edges(1, range(n), [(i, i + 1) for i in range(n - 1)])


class TestSimulateSpread:
    def test_deterministic_wavefront_at_p_one(self):
        snap = generate_network(ws(300, 6, 0.1, seed=2))
        trace = simulate_spread(snap, 0, 1.0, seed=9)
        assert trace.times == geodesic_distances(snap, 0)
        assert trace.actual_lengths() == trace.times

    def test_trace_invariants(self):
        snap = generate_network(er(80, 0.08, seed=4))
        trace = simulate_spread(snap, 0, 0.4, seed=1)
        lengths = trace.actual_lengths()
        shortest = geodesic_distances(snap, 0)
        for node, t in trace.times.items():
            if node == trace.source:
                assert t == 0
                continue
            parent = trace.parents[node]
            assert node in snap.neighbors[parent]
            assert trace.times[parent] < t
            assert lengths[node] >= shortest[node]

    def test_whole_component_reached(self):
        snap = path_graph(12)
        trace = simulate_spread(snap, 0, 0.3, seed=0)
        assert sorted(trace.times) == list(range(12))

    def test_simultaneous_infectors_take_smallest_id(self):
        # 0 feeds 1 and 2 at step 1; both hit 3 at step 2
        snap = build_snapshot_from_edges(1, range(4), [(0, 1), (0, 2), (1, 3), (2, 3)])
        trace = simulate_spread(snap, 0, 1.0)
        assert trace.parents[3] == 1

    def test_rejects_bad_inputs(self):
        snap = path_graph(3)
        with pytest.raises(DataError):
            simulate_spread(snap, 99, 0.5)
        with pytest.raises(DataError):
            simulate_spread(snap, 0, 0.0)
        with pytest.raises(DataError):
            simulate_spread(snap, 0, 1.5)

    def test_deterministic(self):
        snap = generate_network(er(60, 0.1, seed=6))
        a = simulate_spread(snap, 3, 0.35, seed=11)
        b = simulate_spread(snap, 3, 0.35, seed=11)
        assert a.times == b.times and a.parents == b.parents


class TestSampleNetwork:
    def setup_method(self):
        self.snap = generate_network(er(40, 0.15, seed=8))

    def test_node_sampling_full_rate_is_identity(self):
        out = sample_network(self.snap, "node_sampling", 1.0, seed=0)
        assert out.nodes == self.snap.nodes
        assert out.neighbors == self.snap.neighbors

    def test_node_sampling_zero_keeps_only_protected(self):
        out = sample_network(self.snap, "node_sampling", 0.0, seed=0, keep=(3, 7))
        assert out.nodes == (3, 7)

    def test_node_sampling_induces_subgraph(self):
        out = sample_network(self.snap, "node_sampling", 0.4, seed=1)
        kept = set(out.nodes)
        for v in out.nodes:
            assert set(out.neighbors[v]) == set(self.snap.neighbors[v]) & kept

    def test_edge_sampling_keeps_all_nodes(self):
        out = sample_network(self.snap, "edge_sampling", 0.3, seed=2)
        assert out.nodes == self.snap.nodes
        assert out.n_edges < self.snap.n_edges
        for v in out.nodes:
            assert set(out.neighbors[v]) <= set(self.snap.neighbors[v])

    def test_edge_sampling_extremes(self):
        full = sample_network(self.snap, "edge_sampling", 1.0, seed=0)
        empty = sample_network(self.snap, "edge_sampling", 0.0, seed=0)
        assert full.neighbors == self.snap.neighbors
        assert empty.n_edges == 0

    def test_censoring_limits_out_degree_and_symmetrizes(self):
        noms = set()
        for a in self.snap.nodes:
            for b in self.snap.neighbors[a]:
                noms.add((a, b))
        snap = dataclasses.replace(self.snap, nominations=frozenset(noms))
        out = sample_network(snap, "out_degree_censoring", 2, seed=3)
        outdeg = {}
        for a, b in out.nominations:
            outdeg[a] = outdeg.get(a, 0) + 1
        assert max(outdeg.values()) <= 2
        for a, b in out.nominations:
            assert b in out.neighbors[a] and a in out.neighbors[b]

    def test_censoring_needs_nominations(self):
        with pytest.raises(DataError, match="nomination"):
            sample_network(self.snap, "out_degree_censoring", 2)

    def test_unknown_frame(self):
        with pytest.raises(DataError, match="frame"):
            sample_network(self.snap, "snowball", 0.5)

    def test_deterministic(self):
        a = sample_network(self.snap, "node_sampling", 0.5, seed=4)
        b = sample_network(self.snap, "node_sampling", 0.5, seed=4)
        assert a.nodes == b.nodes and a.neighbors == b.neighbors


class TestPathBias:
    def test_record_invariants(self):
        records, summary = path_bias_experiment(
            ws(300, 6, 0.1, seed=1),
            transmission_p=0.4,
            frames=[("node_sampling", 0.3), ("edge_sampling", 0.5)],
            n_sources=2,
            seed=5,
        )
        assert records
        for r in records:
            assert r.actual_len >= r.full_shortest_len >= 1
            if r.sampled_shortest_len is not None:
                assert r.sampled_shortest_len >= r.full_shortest_len
        for label, stats in summary.items():
            assert 0.0 <= stats["disconnect_rate"] <= 1.0
            if stats["mean_sampled_shortest"] is not None:
                assert stats["mean_sampled_shortest"] >= stats["mean_full_shortest"]

    def test_full_certainty_and_full_observation_collapse(self):
        records, _ = path_bias_experiment(
            ws(200, 6, 0.1, seed=3),
            transmission_p=1.0,
            frames=[("node_sampling", 1.0)],
            n_sources=2,
            seed=0,
        )
        for r in records:
            assert r.actual_len == r.full_shortest_len == r.sampled_shortest_len

    def test_censoring_frame_on_generated_network(self):
        records, summary = path_bias_experiment(
            ws(150, 6, 0.1, seed=2),
            transmission_p=0.5,
            frames=[("out_degree_censoring", 3)],
            n_sources=1,
            seed=1,
        )
        label = "out_degree_censoring(3)"
        assert all(r.frame == label for r in records)
        assert summary[label]["n_records"] == len(records)

    def test_deterministic(self):
        args = dict(
            transmission_p=0.4,
            frames=[("node_sampling", 0.4)],
            n_sources=2,
            seed=7,
        )
        a, sa = path_bias_experiment(ws(150, 6, 0.1, seed=4), **args)
        b, sb = path_bias_experiment(ws(150, 6, 0.1, seed=4), **args)
        assert a == b and sa == sb

    def test_rejects_bad_frames(self):
        with pytest.raises(DataError):
            path_bias_experiment(er(50, 0.1), 0.5, [("snowball", 0.5)], 1, 0)
        with pytest.raises(DataError):
            path_bias_experiment(er(50, 0.1), 0.5, [("node_sampling", 0.5)], 0, 0)


def abm(n=200, waves=5, **kw):
    kw.setdefault("network", ws(n, 6, 0.1, seed=0))
    return ABMSpec(waves=waves, **kw)


class TestABM:
    def test_panel_shape(self):
        spec = abm(influence=True, p_influence=0.4, seed=1)
        panel = abm_generate_panel(spec)
        assert len(panel.nodes) == 200
        assert panel.n_waves == 5
        assert panel.trait_names == ["trait"]
        for w in range(1, 6):
            values = panel.trait_values("trait", w)
            assert len(values) == 200
            assert set(values.values()) <= {0.0, 1.0}
        for t in panel.ties:
            assert t.tie_type == "friend"
            assert 1 <= t.wave_first <= t.wave_last <= 5
        assert panel.metadata["ground_truth"]["influence"] is True

    def test_deterministic(self):
        spec = abm(influence=True, shared_context=True, seed=42)
        a = abm_generate_panel(spec)
        b = abm_generate_panel(spec)
        assert a.traits == b.traits
        assert a.ties == b.ties
        assert a.geo == b.geo

    def test_seed_matters(self):
        a = abm_generate_panel(abm(seed=1))
        b = abm_generate_panel(abm(seed=2))
        assert a.traits != b.traits

    def test_nomination_mix_matches_rate(self):
        spec = abm(n=400, p_mutual=0.4, rewire_rate=0.0, seed=5)
        panel = abm_generate_panel(spec)
        snap = snapshot(panel, 1, ["friend"])
        pairs = {(a, b) for a in snap.nodes for b in snap.neighbors[a] if a < b}
        mutual = sum(
            1 for a, b in pairs
            if (a, b) in snap.nominations and (b, a) in snap.nominations
        )
        # 1200 pairs, binomial sd ~ 0.014
        assert abs(mutual / len(pairs) - 0.4) < 0.06

    def test_influence_builds_neighbor_clustering(self):
        # weak per-neighbor influence with fast abandonment keeps prevalence
        # interior, so local clusters stand out instead of saturating
        spec = abm(
            n=300, waves=6, influence=True, p_influence=0.1,
            base_adoption=0.02, abandonment=0.2, initial_prevalence=0.1,
            rewire_rate=0.0, seed=3,
        )
        panel = abm_generate_panel(spec)
        snap = snapshot(panel, 6, ["friend"])
        rr = risk_ratio_at_distance(snap, panel.trait_values("trait", 6), 1)
        assert rr.defined and rr.rr > 1.1

    def test_influence_detected_by_dyadic_model(self):
        spec = abm(
            n=300, waves=6, influence=True, p_influence=0.5,
            rewire_rate=0.0, seed=9,
        )
        rows, _ = build_dyad_rows(abm_generate_panel(spec), "trait", ["friend"])
        fit = fit_gee(rows, ModelSpec(link="identity"))
        assert fit.coef("y_alter_t1") > 0.02
        assert fit.p_value("y_alter_t1") < 0.01

    def test_directionality_classes_present(self):
        spec = abm(directional_influence=True, influence=True, seed=2)
        rows, _ = build_dyad_rows(abm_generate_panel(spec), "trait", ["friend"])
        classes = {r.directionality for r in rows}
        assert {"mutual", "ego_perceived", "alter_perceived"} <= classes

    def test_geo_static_and_complete(self):
        panel = abm_generate_panel(abm(seed=4))
        for v in panel.nodes:
            first = panel.location(v, 1)
            assert first is not None
            for w in range(2, 6):
                assert panel.location(v, w) == first

    def test_rewiring_changes_ties(self):
        quiet = abm_generate_panel(abm(rewire_rate=0.0, seed=6))
        churn = abm_generate_panel(abm(rewire_rate=0.3, seed=6))
        assert all(t.wave_last == 5 and t.wave_first == 1 for t in quiet.ties)
        assert any(t.wave_last < 5 for t in churn.ties)

    def test_continuous_traits(self):
        spec = abm(trait_type="continuous", influence=True, seed=7)
        panel = abm_generate_panel(spec)
        values = panel.trait_values("trait", 5).values()
        assert any(v not in (0.0, 1.0) for v in values)

    def test_validation(self):
        with pytest.raises(DataError, match="waves"):
            abm(waves=1)
        with pytest.raises(DataError, match="p_influence"):
            abm(p_influence=1.2)
        with pytest.raises(DataError, match="trait_type"):
            abm(trait_type="ordinal")

    def test_dict_round_trip(self):
        spec = abm(influence=True, shared_context=True, seed=11)
        assert ABMSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_rejects_unknown_fields(self):
        d = abm().to_dict()
        d["typo_field"] = 1
        with pytest.raises(DataError, match="typo_field"):
            ABMSpec.from_dict(d)


class TestValidationHarness:
    def test_grid_report(self):
        cells = [
            ("null", abm(n=150, waves=4, rewire_rate=0.0)),
            ("influence", abm(n=150, waves=4, influence=True, p_influence=0.5,
                              rewire_rate=0.0)),
        ]
        report = validation_harness(cells, {"link": "identity"}, replicates=3,
                                    seed=0)
        rows = {r["cell"]: r for r in report.rows}
        assert set(rows) == {"null", "influence"}
        for r in rows.values():
            assert r["n_ok"] == 3
            assert r["n_failures"] == 0
            assert 0.0 <= r["detection_rate"] <= 1.0
        assert rows["influence"]["mean_coef"] > rows["null"]["mean_coef"]

    def test_failures_are_recorded_not_raised(self):
        # a trait that never varies makes the alter regressor constant
        frozen = abm(n=100, waves=3, initial_prevalence=0.0, base_adoption=0.0,
                     abandonment=0.0, rewire_rate=0.0)
        report = validation_harness([("frozen", frozen)], {}, replicates=2, seed=1)
        row = report.rows[0]
        assert row["n_ok"] == 0
        assert row["n_failures"] == 2
        assert row["detection_rate"] is None

    def test_rejects_bad_grid(self):
        with pytest.raises(DataError):
            validation_harness([], {}, replicates=2)
        with pytest.raises(DataError):
            validation_harness([("x", abm())], {}, replicates=0)
