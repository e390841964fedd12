"""Ground-truth simulators: seeded network generation, discrete-time spread
with path tracking, partial-observation sampling frames, the path-length
bias experiment, and an agent-based panel generator whose generative
processes (influence, observable/latent homophily, shared context) are
known and recorded, so the statistical modules can be validated against
them.

Determinism discipline: every stochastic step draws from a generator
derived from the master seed and a label path, and all iteration happens
in sorted order, so identical (spec, seed) yields identical output under
any execution schedule.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from .errors import DataError
from .panel import (
    NetworkSnapshot,
    NodeInfo,
    Panel,
    TieRecord,
    build_snapshot_from_edges,
    geodesic_distances,
    haversine_miles,
)
from .seeds import spawn_rng

GENERATORS = ("erdos_renyi", "watts_strogatz", "configuration_model")
SAMPLING_FRAMES = ("node_sampling", "edge_sampling", "out_degree_censoring")


@dataclass(frozen=True)
class SyntheticNetworkSpec:
    """Seeded random-graph recipe."""

    generator: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise DataError(f"unknown generator {self.generator!r}")
        if self.n < 1:
            raise DataError("n must be >= 1")
        p = self.params
        if self.generator == "erdos_renyi":
            if not 0.0 <= p.get("p", -1) <= 1.0:
                raise DataError("erdos_renyi needs p in [0, 1]")
        elif self.generator == "watts_strogatz":
            k = p.get("k")
            if not isinstance(k, int) or not 0 < k < self.n:
                raise DataError("watts_strogatz needs integer 0 < k < n")
            if not 0.0 <= p.get("beta", -1) <= 1.0:
                raise DataError("watts_strogatz needs beta in [0, 1]")
        else:
            degrees = p.get("degrees")
            if not degrees or any(d < 0 for d in degrees):
                raise DataError("configuration_model needs non-negative degrees")
            if len(degrees) != self.n:
                raise DataError("configuration_model needs one degree per node")
            if sum(degrees) % 2:
                raise DataError("configuration_model degree sum must be even")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticNetworkSpec":
        return cls(
            generator=d["generator"],
            n=int(d["n"]),
            params=dict(d.get("params", {})),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "n": self.n,
            "params": dict(self.params),
            "seed": self.seed,
        }


def generate_network(spec: SyntheticNetworkSpec) -> NetworkSnapshot:
    """Deterministic random graph for (spec, seed), as a wave-1 snapshot."""
    nx_seed = int(spawn_rng(spec.seed, "network", spec.generator).integers(2**63))
    if spec.generator == "erdos_renyi":
        G = nx.gnp_random_graph(spec.n, spec.params["p"], seed=nx_seed)
    elif spec.generator == "watts_strogatz":
        G = nx.watts_strogatz_graph(
            spec.n, spec.params["k"], spec.params["beta"], seed=nx_seed
        )
    else:
        multi = nx.configuration_model(list(spec.params["degrees"]), seed=nx_seed)
        G = nx.Graph(multi)
        G.remove_edges_from(nx.selfloop_edges(G))
    return build_snapshot_from_edges(1, range(spec.n), G.edges())


@dataclass
class InfectionTrace:
    """Record of one spread: who got infected when, and from whom."""

    source: object
    times: dict
    parents: dict

    def actual_lengths(self) -> dict:
        """Transmission-tree depth per infected node (source depth 0)."""
        depths = {self.source: 0}
        for node in self.times:
            chain = []
            while node not in depths:
                chain.append(node)
                node = self.parents[node]
            d = depths[node]
            for n in reversed(chain):
                d += 1
                depths[n] = d
        return depths

    @property
    def n_infected(self) -> int:
        return len(self.times)


def simulate_spread(snap: NetworkSnapshot, source, transmission_p: float, seed: int = 0) -> InfectionTrace:
    """Discrete-time SI spread from a single source.

    Each step, every infected node independently infects each susceptible
    neighbor with probability ``transmission_p``; the first successful
    infector becomes the tree parent, with simultaneous successes broken
    toward the smallest node id. Runs until no infected node has a
    susceptible neighbor.
    """
    if source not in snap.neighbors:
        raise DataError(f"unknown source node {source!r}")
    if not 0.0 < transmission_p <= 1.0:
        raise DataError("transmission_p must be in (0, 1]")
    rng = spawn_rng(seed, "spread")
    times = {source: 0}
    parents = {source: None}
    # per-infected list of not-yet-infected neighbors, pruned lazily
    pending = {source: [v for v in snap.neighbors[source] if v not in times]}
    t = 0
    while pending:
        t += 1
        successes = {}
        exhausted = []
        for u in sorted(pending):
            targets = [v for v in pending[u] if v not in times]
            if not targets:
                exhausted.append(u)
                continue
            pending[u] = targets
            for v in targets:
                if rng.random() < transmission_p:
                    successes.setdefault(v, []).append(u)
        for u in exhausted:
            del pending[u]
        for v in sorted(successes):
            times[v] = t
            parents[v] = min(successes[v])
            pending[v] = [w for w in snap.neighbors[v] if w not in times]
    return InfectionTrace(source=source, times=times, parents=parents)


def sample_network(
    snap: NetworkSnapshot,
    frame: str,
    param,
    seed: int = 0,
    keep=(),
) -> NetworkSnapshot:
    """Partially observed view of a network under a named sampling frame.

    node_sampling(q): keep each node with probability q (induced subgraph);
    nodes in ``keep`` are always retained. edge_sampling(q): keep each edge
    with probability q, all nodes stay. out_degree_censoring(limit): keep
    at most ``limit`` outgoing nominations per node, then symmetrize; the
    input must carry nominations.
    """
    if frame not in SAMPLING_FRAMES:
        raise DataError(f"unknown sampling frame {frame!r}")
    rng = spawn_rng(seed, "sample", frame)
    nodes = snap.nodes
    if frame == "node_sampling":
        q = float(param)
        if not 0.0 <= q <= 1.0:
            raise DataError("node sampling rate must be in [0, 1]")
        keep = frozenset(keep)
        kept = [n for n in nodes if n in keep or rng.random() < q]
        kept_set = frozenset(kept)
        edges = [
            (a, b)
            for a in kept
            for b in snap.neighbors[a]
            if a < b and b in kept_set
        ]
        nominations = {(a, b) for a, b in snap.nominations
                       if a in kept_set and b in kept_set}
        return build_snapshot_from_edges(snap.wave, kept, edges, nominations)
    if frame == "edge_sampling":
        q = float(param)
        if not 0.0 <= q <= 1.0:
            raise DataError("edge sampling rate must be in [0, 1]")
        edges = []
        for a in nodes:
            for b in snap.neighbors[a]:
                if a < b and rng.random() < q:
                    edges.append((a, b))
        kept_pairs = {(a, b) for a, b in edges} | {(b, a) for a, b in edges}
        nominations = {d for d in snap.nominations if d in kept_pairs}
        return build_snapshot_from_edges(snap.wave, nodes, edges, nominations)
    limit = int(param)
    if limit < 0:
        raise DataError("censoring limit must be >= 0")
    if not snap.nominations:
        raise DataError("out-degree censoring needs nominations")
    outgoing = {}
    for a, b in sorted(snap.nominations):
        outgoing.setdefault(a, []).append(b)
    kept_noms = set()
    for a in sorted(outgoing):
        named = outgoing[a]
        if len(named) > limit:
            chosen = rng.choice(len(named), size=limit, replace=False)
            named = [named[i] for i in sorted(chosen)]
        kept_noms.update((a, b) for b in named)
    edges = {(min(a, b), max(a, b)) for a, b in kept_noms}
    return build_snapshot_from_edges(snap.wave, nodes, sorted(edges), kept_noms)


@dataclass(frozen=True)
class PathBiasRecord:
    source: object
    target: object
    actual_len: int
    full_shortest_len: int
    sampled_shortest_len: Optional[int]
    frame: str


def _bidirectional_nominations(snap: NetworkSnapshot) -> NetworkSnapshot:
    noms = set()
    for a in snap.nodes:
        for b in snap.neighbors[a]:
            noms.add((a, b))
    return NetworkSnapshot(
        wave=snap.wave,
        nodes=snap.nodes,
        neighbors=snap.neighbors,
        nominations=frozenset(noms),
        edge_types=snap.edge_types,
    )


def _frame_label(frame: str, param) -> str:
    return f"{frame}({param})"


def path_bias_experiment(
    spec: SyntheticNetworkSpec,
    transmission_p: float,
    frames,
    n_sources: int = 1,
    seed: int = 0,
):
    """Actual vs shortest vs sampled-shortest path lengths.

    For each source, one spread gives the actual transmission path length
    per reached target; full-network BFS gives the true shortest length;
    per frame, BFS on the sampled network gives the observed shortest
    length. Under node sampling the source and each target are protected:
    equivalent to re-sampling with both endpoints retained, computed once
    per frame by adjusting distances through each unsampled target's
    sampled neighbors. Returns (records, summary dict keyed by frame).

    ``frames`` is a list of (frame, param) pairs. Disconnections are
    recorded, not fatal.
    """
    if n_sources < 1:
        raise DataError("n_sources must be >= 1")
    frames = list(frames)
    for frame, _ in frames:
        if frame not in SAMPLING_FRAMES:
            raise DataError(f"unknown sampling frame {frame!r}")
    network = generate_network(spec)
    if any(f == "out_degree_censoring" for f, _ in frames) and not network.nominations:
        network = _bidirectional_nominations(network)
    src_rng = spawn_rng(seed, "sources")
    sources = list(
        src_rng.choice(np.asarray(network.nodes), size=n_sources, replace=False)
    )
    records = []
    for i, source in enumerate(int(s) for s in sources):
        trace = simulate_spread(network, source, transmission_p, seed=spawn_seed(seed, "spread", i))
        actual = trace.actual_lengths()
        full = geodesic_distances(network, source)
        targets = sorted(n for n in trace.times if n != source)
        for j, (frame, param) in enumerate(frames):
            label = _frame_label(frame, param)
            sampled = sample_network(
                network, frame, param,
                seed=spawn_seed(seed, "frame", j, i),
                keep=(source,),
            )
            dist = geodesic_distances(sampled, source) if source in sampled.neighbors else {}
            sampled_nodes = frozenset(sampled.nodes)
            for t in targets:
                if frame == "node_sampling" and t not in sampled_nodes:
                    # protecting the target adds it plus its edges into the
                    # sampled node set; the best route ends at one of its
                    # sampled neighbors
                    best = None
                    for u in network.neighbors[t]:
                        du = dist.get(u)
                        if du is not None and (best is None or du + 1 < best):
                            best = du + 1
                    s_len = best
                else:
                    s_len = dist.get(t)
                records.append(
                    PathBiasRecord(
                        source=source,
                        target=t,
                        actual_len=actual[t],
                        full_shortest_len=full[t],
                        sampled_shortest_len=s_len,
                        frame=label,
                    )
                )
    summary = {}
    for frame, param in frames:
        label = _frame_label(frame, param)
        rec = [r for r in records if r.frame == label]
        defined = [r for r in rec if r.sampled_shortest_len is not None]
        n_defined = len(defined)
        summary[label] = {
            "n_records": len(rec),
            "n_disconnected": len(rec) - n_defined,
            "disconnect_rate": (len(rec) - n_defined) / len(rec) if rec else 0.0,
            "mean_actual": (
                sum(r.actual_len for r in defined) / n_defined if defined else None
            ),
            "mean_full_shortest": (
                sum(r.full_shortest_len for r in defined) / n_defined
                if defined else None
            ),
            "mean_sampled_shortest": (
                sum(r.sampled_shortest_len for r in defined) / n_defined
                if defined else None
            ),
            "mean_actual_over_sampled": (
                sum(r.actual_len / r.sampled_shortest_len for r in defined) / n_defined
                if defined else None
            ),
        }
    return records, summary


def spawn_seed(master_seed: int, *path) -> int:
    """Derived integer seed for a labeled sub-task."""
    return int(spawn_rng(master_seed, *path).integers(0, 2**31 - 1))


# ---------------------------------------------------------------------------
# Agent-based panel generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ABMSpec:
    """Generative recipe for a synthetic longitudinal panel.

    Process flags select which mechanisms run; everything else tunes them.
    Traits evolve wave by wave: adoption probability rises with the number
    of trait-positive influencing neighbors, shared-context shocks move
    whole groups together, and homophily rewires ties toward similar
    (observed or hidden) partners using current-wave traits before the
    trait transition, so selection acts only on information the dyadic
    regression already conditions on.
    """

    network: SyntheticNetworkSpec
    waves: int = 6
    trait: str = "trait"
    trait_type: str = "binary"
    influence: bool = False
    observable_homophily: bool = False
    latent_homophily: bool = False
    shared_context: bool = False
    p_influence: float = 0.3
    directional_influence: bool = False
    directional_weights: tuple = (("mutual", 1.0), ("ego_perceived", 0.75),
                                  ("alter_perceived", 0.0))
    base_adoption: float = 0.05
    abandonment: float = 0.05
    initial_prevalence: float = 0.2
    rewire_rate: float = 0.1
    similarity_weight: float = 0.9
    latent_loading: float = 1.0
    context_groups: int = 20
    context_shock: float = 0.15
    p_mutual: float = 0.4
    geo_center: tuple = (42.0, -71.5)
    geo_span_degrees: float = 1.0
    max_influence_distance_miles: Optional[float] = None
    influence_strength: float = 0.4
    continuous_noise: float = 0.3
    seed: int = 0

    def __post_init__(self):
        weights = self.directional_weights
        if isinstance(weights, dict):
            weights = weights.items()
        object.__setattr__(self, "directional_weights", tuple(sorted(weights)))
        object.__setattr__(self, "geo_center", tuple(self.geo_center))
        if self.waves < 2:
            raise DataError("waves must be >= 2")
        if self.trait_type not in ("binary", "continuous"):
            raise DataError(f"unknown trait_type {self.trait_type!r}")
        for name in ("p_influence", "base_adoption", "abandonment",
                     "initial_prevalence", "rewire_rate", "similarity_weight",
                     "p_mutual"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must be in [0, 1]")
        if self.context_groups < 1:
            raise DataError("context_groups must be >= 1")
        for cls, w in self.directional_weights:
            if not 0.0 <= w <= 1.0:
                raise DataError(f"directional weight for {cls} must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ABMSpec":
        d = dict(d)
        d["network"] = SyntheticNetworkSpec.from_dict(d["network"])
        if "directional_weights" in d and isinstance(d["directional_weights"], dict):
            d["directional_weights"] = tuple(d["directional_weights"].items())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown ABM spec field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["network"] = self.network.to_dict()
        out["directional_weights"] = dict(self.directional_weights)
        out["geo_center"] = list(self.geo_center)
        return out


def _draw_nomination(rng, a, b, p_mutual: float) -> frozenset:
    """Directed nomination(s) for a new undirected tie."""
    if rng.random() < p_mutual:
        return frozenset({(a, b), (b, a)})
    return frozenset({(a, b)}) if rng.random() < 0.5 else frozenset({(b, a)})


def abm_generate_panel(spec: ABMSpec) -> Panel:
    """Simulate a multi-wave panel under the configured processes.

    Wave step w -> w+1: (1) traits transition using wave-w traits and the
    wave-w network; (2) ties rewire using wave-w similarity. Ground-truth
    process labels land in the panel metadata.
    """
    rng = spawn_rng(spec.seed, "abm")
    n = spec.network.n
    nodes = list(range(n))
    base_net = generate_network(spec.network)
    adj = {v: set(base_net.neighbors[v]) for v in nodes}

    nominations = {}
    for a in nodes:
        for b in adj[a]:
            if a < b:
                nominations[(a, b)] = _draw_nomination(rng, a, b, spec.p_mutual)

    hidden = rng.standard_normal(n)
    if spec.trait_type == "binary":
        traits = (rng.random(n) < spec.initial_prevalence).astype(float)
    else:
        traits = rng.standard_normal(n)

    # contiguous blocks approximate shared environments; on ring-based
    # generators blocks align with lattice neighborhoods
    group_size = max(1, math.ceil(n / spec.context_groups))
    group_of = np.array([v // group_size for v in nodes])

    positions = {}
    lat0, lon0 = spec.geo_center
    half = spec.geo_span_degrees / 2.0
    for v in nodes:
        positions[v] = (
            lat0 + rng.uniform(-half, half),
            lon0 + rng.uniform(-half, half),
        )

    if spec.latent_homophily:
        base = np.clip(spec.base_adoption * np.exp(spec.latent_loading * hidden),
                       0.0, 0.9)
        abandon = np.clip(spec.abandonment * np.exp(-spec.latent_loading * hidden),
                          0.0, 0.9)
    else:
        base = np.full(n, spec.base_adoption)
        abandon = np.full(n, spec.abandonment)

    weights = dict(spec.directional_weights)

    def influencers(v):
        """(neighbor, weight) pairs whose trait can move v this wave."""
        out = []
        for u in sorted(adj[v]):
            if spec.directional_influence:
                pair = (min(u, v), max(u, v))
                noms = nominations[pair]
                names = (v, u) in noms
                named_by = (u, v) in noms
                if names and named_by:
                    w = weights.get("mutual", 1.0)
                elif names:
                    w = weights.get("ego_perceived", 0.75)
                else:
                    w = weights.get("alter_perceived", 0.0)
            else:
                w = 1.0
            if w <= 0.0:
                continue
            if spec.max_influence_distance_miles is not None:
                pv, pu = positions[v], positions[u]
                if haversine_miles(pv[0], pv[1], pu[0], pu[1]) > spec.max_influence_distance_miles:
                    continue
            out.append((u, w))
        return out

    trait_history = [traits.copy()]
    nom_waves = {}

    def record_wave(w):
        for a in nodes:
            for b in adj[a]:
                if a < b:
                    for d in nominations[(a, b)]:
                        nom_waves.setdefault(d, []).append(w)

    record_wave(1)
    for w in range(1, spec.waves):
        # trait transition on the wave-w network
        if spec.shared_context:
            shocks = rng.normal(0.0, spec.context_shock, size=int(group_of.max()) + 1)
        else:
            shocks = np.zeros(int(group_of.max()) + 1)
        new_traits = traits.copy()
        if spec.trait_type == "binary":
            for v in nodes:
                shock = shocks[group_of[v]]
                if traits[v] == 0.0:
                    keep = 1.0 - base[v]
                    if spec.influence:
                        for u, wt in influencers(v):
                            if traits[u] == 1.0:
                                keep *= 1.0 - wt * spec.p_influence
                    p_adopt = min(max(1.0 - keep + shock, 0.0), 1.0)
                    new_traits[v] = 1.0 if rng.random() < p_adopt else 0.0
                else:
                    p_drop = min(max(abandon[v] - shock, 0.0), 1.0)
                    new_traits[v] = 0.0 if rng.random() < p_drop else 1.0
        else:
            for v in nodes:
                shock = shocks[group_of[v]]
                pull = 0.0
                if spec.influence:
                    infl = influencers(v)
                    if infl:
                        pull = sum(wt * (traits[u] - traits[v]) for u, wt in infl)
                        pull *= spec.influence_strength / len(infl)
                drift = spec.latent_loading * 0.1 * hidden[v] if spec.latent_homophily else 0.0
                new_traits[v] = (
                    traits[v] + pull + shock + drift
                    + rng.normal(0.0, spec.continuous_noise)
                )

        # rewiring toward wave-w similarity
        if spec.rewire_rate > 0.0:
            if spec.trait_type == "continuous":
                median = float(np.median(traits))
                observed_side = traits > median
            else:
                observed_side = traits.astype(bool)
            latent_side = hidden > 0.0
            for a, b in sorted((min(x, y), max(x, y))
                               for x in nodes for y in adj[x] if x < y):
                if rng.random() >= spec.rewire_rate:
                    continue
                rewirer, other = (a, b) if rng.random() < 0.5 else (b, a)
                pool = [c for c in nodes
                        if c != rewirer and c != other and c not in adj[rewirer]]
                if not pool:
                    continue
                side = None
                if spec.observable_homophily:
                    side = observed_side
                elif spec.latent_homophily:
                    side = latent_side
                candidates = pool
                if side is not None and rng.random() < spec.similarity_weight:
                    similar = [c for c in pool if side[c] == side[rewirer]]
                    if similar:
                        candidates = similar
                new = int(candidates[int(rng.integers(len(candidates)))])
                adj[a].discard(b)
                adj[b].discard(a)
                del nominations[(a, b)]
                adj[rewirer].add(new)
                adj[new].add(rewirer)
                pair = (min(rewirer, new), max(rewirer, new))
                nominations[pair] = _draw_nomination(rng, pair[0], pair[1],
                                                     spec.p_mutual)

        traits = new_traits
        trait_history.append(traits.copy())
        record_wave(w + 1)

    node_infos = {v: NodeInfo(in_sample=True) for v in nodes}
    ties = []
    for (a, b) in sorted(nom_waves):
        for first, last in _spans(nom_waves[(a, b)]):
            ties.append(TieRecord(a, b, "friend", first, last, True))
    trait_obs = {}
    for w, vec in enumerate(trait_history, start=1):
        for v in nodes:
            trait_obs[(v, w, spec.trait)] = float(vec[v])
    geo = {}
    for v in nodes:
        for w in range(1, spec.waves + 1):
            geo[(v, w)] = positions[v]
    metadata = {
        "generator": "abm",
        "ground_truth": {
            "influence": spec.influence,
            "observable_homophily": spec.observable_homophily,
            "latent_homophily": spec.latent_homophily,
            "shared_context": spec.shared_context,
            "directional_influence": spec.directional_influence,
        },
        "spec": spec.to_dict(),
    }
    return Panel(nodes=node_infos, ties=tuple(ties), traits=trait_obs, geo=geo,
                 metadata=metadata)


def _spans(waves):
    spans = []
    start = prev = waves[0]
    for w in waves[1:]:
        if w == prev + 1:
            prev = w
        else:
            spans.append((start, prev))
            start = prev = w
    spans.append((start, prev))
    return spans


# ---------------------------------------------------------------------------
# Validation harness
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    rows: list

    def to_dict(self) -> dict:
        return {"cells": self.rows}

    def csv_rows(self):
        return self.rows


def validation_harness(cells, analysis: dict, replicates: int, seed: int = 0) -> ValidationReport:
    """Run each ABM cell many times and tabulate what the estimators see.

    ``cells`` is a list of (name, ABMSpec) pairs. ``analysis`` keys:
    covariates (default none), link (default identity), alpha (default
    0.05), directional (also run the friendship-class contrast),
    cluster_reach (also run the permutation test at the final wave, with
    max_d and cluster_replicates). Per-replicate failures are recorded in
    the report, never raised.
    """
    from .cluster import cluster_test, reach as cluster_reach_of
    from .gee import ModelSpec, build_dyad_rows, directional_contrast, fit_gee
    from .panel import snapshot as panel_snapshot

    if not cells:
        raise DataError("empty validation grid")
    if replicates < 1:
        raise DataError("replicates must be >= 1")
    alpha = float(analysis.get("alpha", 0.05))
    link = analysis.get("link", "identity")
    covariates = list(analysis.get("covariates", []))
    want_directional = bool(analysis.get("directional", False))
    want_reach = bool(analysis.get("cluster_reach", False))
    max_d = int(analysis.get("max_d", 3))
    cluster_reps = int(analysis.get("cluster_replicates", 200))

    report_rows = []
    for name, spec in cells:
        detections = 0
        coefs = []
        orderings = 0
        pairwise_all_ns = 0
        reaches = []
        failures = []
        n_ok = 0
        n_dir_ok = 0
        for r in range(replicates):
            rep_seed = spawn_seed(seed, "cell", name, r)
            rep_spec = dataclasses.replace(spec, seed=rep_seed)
            try:
                panel = abm_generate_panel(rep_spec)
                rows, _ = build_dyad_rows(panel, rep_spec.trait, ["friend"],
                                          covariates)
                fit = fit_gee(rows, ModelSpec(link=link))
                coef = fit.coef("y_alter_t1")
                coefs.append(coef)
                if coef > 0 and fit.p_value("y_alter_t1") < alpha:
                    detections += 1
                n_ok += 1
                if want_directional:
                    contrast = directional_contrast(rows, ModelSpec(link=link))
                    est = {c: v["estimate"] for c, v in contrast.per_class.items()}
                    if set(est) >= {"mutual", "ego_perceived", "alter_perceived"}:
                        n_dir_ok += 1
                        if (est["mutual"] >= est["ego_perceived"]
                                >= est["alter_perceived"]):
                            orderings += 1
                        if all(p["p_value"] > alpha for p in contrast.pairwise):
                            pairwise_all_ns += 1
                if want_reach:
                    snap = panel_snapshot(panel, rep_spec.waves, ["friend"])
                    values = panel.trait_values(rep_spec.trait, rep_spec.waves)
                    result = cluster_test(
                        snap, values, max_d=max_d, replicates=cluster_reps,
                        seed=spawn_seed(seed, "reach", name, r),
                    )
                    reaches.append(cluster_reach_of(result))
            except Exception as exc:  # per-cell failures must not abort the grid
                failures.append(f"rep {r}: {exc}")
        row = {
            "cell": name,
            "ground_truth": dict(spec.to_dict()["network"], **{
                k: getattr(spec, k)
                for k in ("influence", "observable_homophily",
                          "latent_homophily", "shared_context")
            }),
            "replicates": replicates,
            "n_ok": n_ok,
            "detection_rate": detections / n_ok if n_ok else None,
            "mean_coef": float(np.mean(coefs)) if coefs else None,
            "sd_coef": float(np.std(coefs)) if coefs else None,
            "n_failures": len(failures),
            "failures": failures[:5],
        }
        if want_directional:
            row["ordering_rate"] = orderings / n_dir_ok if n_dir_ok else None
            row["pairwise_ns_rate"] = pairwise_all_ns / n_dir_ok if n_dir_ok else None
        if want_reach:
            row["reaches"] = reaches
            row["median_reach"] = float(np.median(reaches)) if reaches else None
        report_rows.append(row)
    return ValidationReport(rows=report_rows)
