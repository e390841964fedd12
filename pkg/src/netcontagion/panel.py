"""Longitudinal network panel: data model, CSV ingestion, wave snapshots,
geodesic distances, friendship directionality, and geography.

A :class:`Panel` holds the full longitudinal record (nodes, typed tie spans,
per-wave trait observations, per-wave locations). A :class:`NetworkSnapshot`
is the static view of the network at one wave: a symmetric adjacency for
distance computations plus the raw directed friend nominations.

Both types are immutable after construction; every operation here is a pure
read and safe for concurrent callers.
"""

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .errors import DataError, PanelFormatError

NodeId = Union[str, int]

TIE_TYPES = frozenset(
    {"spouse", "sibling", "parent", "child", "friend", "coworker", "neighbor"}
)

#: Great-circle radius used for all geographic distances, in statute miles.
EARTH_RADIUS_MILES = 3958.8

_METERS_PER_MILE = 1609.344


@dataclass(frozen=True)
class TieRecord:
    """One typed tie span between two nodes.

    ``nominated_by_ego`` is meaningful only for friend ties, which are
    directional: True means ego named alter, False means alter named ego
    (the record is stored from ego's perspective either way). Family,
    spouse, coworker, and neighbor ties are symmetric.
    """

    ego: NodeId
    alter: NodeId
    tie_type: str
    wave_first: int
    wave_last: int
    nominated_by_ego: bool = True

    def __post_init__(self):
        if self.ego == self.alter:
            raise DataError(f"self-tie for node {self.ego!r}")
        if self.tie_type not in TIE_TYPES:
            raise DataError(f"unknown tie_type {self.tie_type!r}")
        if self.wave_first > self.wave_last:
            raise DataError(
                f"tie {self.ego!r}-{self.alter!r}: wave_first {self.wave_first} "
                f"> wave_last {self.wave_last}"
            )
        if self.wave_first < 1:
            raise DataError(f"tie {self.ego!r}-{self.alter!r}: waves start at 1")

    def active_at(self, wave: int) -> bool:
        return self.wave_first <= wave <= self.wave_last


@dataclass(frozen=True)
class NodeInfo:
    """Static attributes of one node."""

    in_sample: bool = True
    sex: Optional[str] = None
    birth_year: Optional[int] = None


@dataclass
class Panel:
    """The longitudinal network panel.

    Attributes
    ----------
    nodes : dict
        NodeId -> NodeInfo. Out-of-sample nodes (identity known, traits
        unobserved) are legitimate members: they appear in snapshots and
        distance computations but never carry trait observations.
    ties : tuple of TieRecord
    traits : dict
        (node, wave, trait name) -> value. Binary traits are coded 0/1.
    geo : dict
        (node, wave) -> (latitude, longitude) in degrees.
    metadata : dict
        Free-form provenance (e.g. ground-truth process labels written by
        the panel simulators).
    """

    nodes: dict
    ties: tuple = ()
    traits: dict = field(default_factory=dict)
    geo: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ties = tuple(self.ties)
        self.validate()

    def validate(self):
        for t in self.ties:
            for n in (t.ego, t.alter):
                if n not in self.nodes:
                    raise DataError(f"tie references unknown node {n!r}")
        for (node, wave, trait), value in self.traits.items():
            if node not in self.nodes:
                raise DataError(f"trait {trait!r} references unknown node {node!r}")
            if not self.nodes[node].in_sample:
                raise DataError(
                    f"trait {trait!r} observed for out-of-sample node {node!r}"
                )
            if wave < 1:
                raise DataError(f"trait {trait!r} for node {node!r}: waves start at 1")
        for (node, wave), (lat, lon) in self.geo.items():
            if node not in self.nodes:
                raise DataError(f"geo row references unknown node {node!r}")
            if not -90.0 <= lat <= 90.0:
                raise DataError(f"latitude {lat} out of range for node {node!r}")
            if not -180.0 <= lon <= 180.0:
                raise DataError(f"longitude {lon} out of range for node {node!r}")

    @property
    def n_waves(self) -> int:
        """Largest wave index referenced anywhere in the panel."""
        waves = [1]
        waves.extend(t.wave_last for t in self.ties)
        waves.extend(w for (_, w, _) in self.traits)
        waves.extend(w for (_, w) in self.geo)
        return max(waves)

    @property
    def trait_names(self):
        return sorted({name for (_, _, name) in self.traits})

    def trait_values(self, trait: str, wave: int) -> dict:
        """All observed values of ``trait`` at ``wave``, keyed by node."""
        return {
            node: value
            for (node, w, name), value in self.traits.items()
            if name == trait and w == wave
        }

    def trait_at(self, node: NodeId, wave: int, trait: str):
        return self.traits.get((node, wave, trait))

    def covariate_at(self, node: NodeId, wave: int, name: str):
        """Resolve a covariate for ``node`` at ``wave``.

        Trait observations at the wave take precedence (time-varying);
        otherwise falls back to a numeric static node attribute.
        Returns None when unavailable.
        """
        value = self.traits.get((node, wave, name))
        if value is not None:
            return value
        info = self.nodes.get(node)
        if info is None:
            return None
        if name == "birth_year":
            return None if info.birth_year is None else float(info.birth_year)
        if name == "sex":
            try:
                return None if info.sex is None else float(info.sex)
            except ValueError:
                return None
        return None

    def covariate_kind(self, name: str) -> str:
        """Label a covariate as 'time-varying' (trait) or 'static' (attribute)."""
        if any(t == name for (_, _, t) in self.traits):
            return "time-varying"
        return "static"

    def location(self, node: NodeId, wave: int):
        return self.geo.get((node, wave))


@dataclass
class NetworkSnapshot:
    """Static view of the network at one wave.

    ``neighbors`` is the symmetric adjacency (union of tie types active at
    the wave, after any tie-type filter), with neighbor lists sorted for
    deterministic iteration. ``nominations`` is the raw directed
    friend-nomination edge set. ``edge_types`` preserves the typed records
    collapsed into each undirected edge, keyed by the sorted node pair.
    """

    wave: int
    nodes: tuple
    neighbors: dict
    nominations: frozenset = frozenset()
    edge_types: dict = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.neighbors.values()) // 2

    def has_edge(self, a: NodeId, b: NodeId) -> bool:
        return b in self._neighbor_sets().get(a, ())

    def _neighbor_sets(self):
        cached = getattr(self, "_nbr_sets", None)
        if cached is None:
            cached = {n: frozenset(v) for n, v in self.neighbors.items()}
            object.__setattr__(self, "_nbr_sets", cached)
        return cached

    def degree(self, node: NodeId) -> int:
        return len(self.neighbors.get(node, ()))


def build_snapshot_from_edges(wave, nodes, edges, nominations=(), edge_types=None):
    """Assemble a NetworkSnapshot from an undirected edge list.

    Symmetric closure and sorted neighbor lists are applied here so every
    construction path satisfies the adjacency invariants.
    """
    adj = {n: set() for n in nodes}
    for a, b in edges:
        if a == b:
            continue
        adj[a].add(b)
        adj[b].add(a)
    neighbors = {n: tuple(sorted(adj[n])) for n in adj}
    return NetworkSnapshot(
        wave=wave,
        nodes=tuple(sorted(nodes)),
        neighbors=neighbors,
        nominations=frozenset(nominations),
        edge_types=dict(edge_types or {}),
    )


def snapshot(panel: Panel, wave: int, tie_filter: Optional[Iterable[str]] = None) -> NetworkSnapshot:
    """Network view at one wave: ties active there, optionally filtered by type.

    A tie is active at wave w iff wave_first <= w <= wave_last. Multiple
    typed records between the same pair collapse into one undirected edge;
    the types are preserved in ``edge_types``.
    """
    if not 1 <= wave <= panel.n_waves:
        raise DataError(f"wave {wave} out of range 1..{panel.n_waves}")
    if tie_filter is not None:
        tie_filter = frozenset(tie_filter)
        unknown = tie_filter - TIE_TYPES
        if unknown:
            raise DataError(f"unknown tie type(s) in filter: {sorted(unknown)}")

    edges = []
    nominations = set()
    types = {}
    for t in panel.ties:
        if not t.active_at(wave):
            continue
        if tie_filter is not None and t.tie_type not in tie_filter:
            continue
        edges.append((t.ego, t.alter))
        key = (t.ego, t.alter) if t.ego <= t.alter else (t.alter, t.ego)
        types.setdefault(key, set()).add(t.tie_type)
        if t.tie_type == "friend":
            if t.nominated_by_ego:
                nominations.add((t.ego, t.alter))
            else:
                nominations.add((t.alter, t.ego))
    edge_types = {k: tuple(sorted(v)) for k, v in types.items()}
    return build_snapshot_from_edges(
        wave, panel.nodes.keys(), edges, nominations, edge_types
    )


def geodesic_distances(snap: NetworkSnapshot, source: NodeId, max_d: Optional[int] = None) -> dict:
    """Breadth-first geodesic distances from ``source``.

    Nodes farther than ``max_d`` steps (or disconnected) are absent from
    the returned map; ``max_d=None`` means unbounded.
    """
    if source not in snap.neighbors:
        raise DataError(f"unknown source node {source!r}")
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        if max_d is not None and du >= max_d:
            continue
        for v in snap.neighbors[u]:
            if v not in dist:
                dist[v] = du + 1
                queue.append(v)
    return dist


def classify_friendship(snap: NetworkSnapshot, ego: NodeId, alter: NodeId) -> str:
    """Directionality class of the friend tie from ego's perspective.

    'mutual' when both nominations are present, 'ego_perceived' when only
    ego named alter, 'alter_perceived' when only alter named ego, 'none'
    otherwise.
    """
    for n in (ego, alter):
        if n not in snap.neighbors:
            raise DataError(f"unknown node {n!r}")
    fwd = (ego, alter) in snap.nominations
    back = (alter, ego) in snap.nominations
    if fwd and back:
        return "mutual"
    if fwd:
        return "ego_perceived"
    if back:
        return "alter_perceived"
    return "none"


def haversine_miles(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two coordinates, in statute miles."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(a)))


def geographic_distance(panel: Panel, a: NodeId, b: NodeId, wave: int) -> float:
    """Great-circle distance in miles between two nodes' residences at a wave."""
    loc_a = panel.location(a, wave)
    loc_b = panel.location(b, wave)
    if loc_a is None:
        raise DataError(f"no location for node {a!r} at wave {wave}")
    if loc_b is None:
        raise DataError(f"no location for node {b!r} at wave {wave}")
    if loc_a == loc_b:
        return 0.0
    return haversine_miles(loc_a[0], loc_a[1], loc_b[0], loc_b[1])


def degree_stats(obj) -> dict:
    """Descriptive tie summary for reports.

    For a NetworkSnapshot: degree distribution at that wave. For a Panel:
    distinct tie partnerships per in-sample node over the whole follow-up
    (each (partner, tie type) pair counted once per node).
    """
    if isinstance(obj, NetworkSnapshot):
        degrees = sorted(obj.degree(n) for n in obj.nodes)
        type_counts = {}
        for types in obj.edge_types.values():
            for tt in types:
                type_counts[tt] = type_counts.get(tt, 0) + 1
        friended = {
            n
            for pair, types in obj.edge_types.items()
            if "friend" in types
            for n in pair
        }
        n = len(obj.nodes)
        return {
            "n_nodes": n,
            "n_edges": obj.n_edges,
            "mean_degree": (sum(degrees) / n) if n else 0.0,
            "median_degree": _median(degrees),
            "per_tie_type": dict(sorted(type_counts.items())),
            "pct_with_friend": (100.0 * len(friended) / n) if n else 0.0,
        }
    if isinstance(obj, Panel):
        partners = {n: set() for n in obj.nodes}
        pair_types = set()
        for t in obj.ties:
            key = (t.ego, t.alter) if t.ego <= t.alter else (t.alter, t.ego)
            pair_types.add((key, t.tie_type))
        for (a, b), tt in pair_types:
            partners[a].add((b, tt))
            partners[b].add((a, tt))
        in_sample = sorted(n for n, info in obj.nodes.items() if info.in_sample)
        counts = sorted(len(partners[n]) for n in in_sample)
        type_counts = {}
        for _, tt in pair_types:
            type_counts[tt] = type_counts.get(tt, 0) + 1
        friended = sum(
            1 for n in in_sample if any(tt == "friend" for _, tt in partners[n])
        )
        m = len(in_sample)
        return {
            "n_subjects": m,
            "n_nodes": len(obj.nodes),
            "mean_ties_per_subject": (sum(counts) / m) if m else 0.0,
            "median_ties_per_subject": _median(counts),
            "per_tie_type": dict(sorted(type_counts.items())),
            "pct_with_friend": (100.0 * friended / m) if m else 0.0,
        }
    raise TypeError("degree_stats expects a NetworkSnapshot or Panel")


def _median(sorted_values):
    n = len(sorted_values)
    if n == 0:
        return 0.0
    mid = n // 2
    if n % 2:
        return float(sorted_values[mid])
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2.0


def derive_neighbor_ties(panel: Panel, radius_meters: float = 100.0):
    """Neighbor ties inferred from geolocations.

    Two nodes are neighbors at a wave when their residences lie within
    ``radius_meters`` of each other (the expansive same-block definition).
    Contiguous waves are merged into single tie spans. Returns a list of
    TieRecords that can be appended to the panel via :func:`add_ties`.
    """
    if radius_meters < 0:
        raise DataError("radius must be non-negative")
    radius_miles = radius_meters / _METERS_PER_MILE
    by_wave = {}
    for (node, wave), loc in panel.geo.items():
        by_wave.setdefault(wave, []).append((node, loc))
    pair_waves = {}
    for wave in sorted(by_wave):
        entries = sorted(by_wave[wave])
        for i in range(len(entries)):
            node_i, loc_i = entries[i]
            for j in range(i + 1, len(entries)):
                node_j, loc_j = entries[j]
                d = haversine_miles(loc_i[0], loc_i[1], loc_j[0], loc_j[1])
                if d <= radius_miles:
                    pair_waves.setdefault((node_i, node_j), []).append(wave)
    ties = []
    for (a, b), waves in sorted(pair_waves.items()):
        for first, last in _contiguous_spans(waves):
            ties.append(TieRecord(a, b, "neighbor", first, last))
    return ties


def _contiguous_spans(waves):
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


def add_ties(panel: Panel, extra_ties) -> Panel:
    """New Panel with additional tie records appended."""
    return Panel(
        nodes=panel.nodes,
        ties=panel.ties + tuple(extra_ties),
        traits=panel.traits,
        geo=panel.geo,
        metadata=panel.metadata,
    )


# ---------------------------------------------------------------------------
# CSV ingestion. All files are UTF-8 with a header row; see the README for
# the toy four-node example of each format.
# ---------------------------------------------------------------------------

_NODE_FIELDS = ("node_id", "in_sample")
_TIE_FIELDS = ("ego_id", "alter_id", "tie_type", "wave_first", "wave_last")
_TRAIT_FIELDS = ("node_id", "wave", "trait", "value")
_GEO_FIELDS = ("node_id", "wave", "latitude", "longitude")


def _read_rows(path, required):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [f for f in required if f not in header]
        if missing:
            raise PanelFormatError(
                f"missing column(s) {missing}", file=str(path), line=1
            )
        for row in reader:
            yield reader.line_num, row


def _parse_int(raw, what, path, line):
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise PanelFormatError(f"bad {what} {raw!r}", file=str(path), line=line) from None


def _parse_float(raw, what, path, line):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise PanelFormatError(f"bad {what} {raw!r}", file=str(path), line=line) from None


def _parse_bool01(raw, what, path, line):
    if raw in ("0", "1"):
        return raw == "1"
    raise PanelFormatError(f"{what} must be 0 or 1, got {raw!r}", file=str(path), line=line)


def load_panel(node_file, tie_file, trait_file, geo_file=None) -> Panel:
    """Load and validate a Panel from its CSV files.

    Errors carry file and line context; dangling node references and
    duplicate (node, wave, trait) observations are rejected. ``geo_file``
    may be omitted for panels without geolocation.
    """
    nodes = {}
    for line, row in _read_rows(node_file, _NODE_FIELDS):
        node_id = (row.get("node_id") or "").strip()
        if not node_id:
            raise PanelFormatError("empty node_id", file=str(node_file), line=line)
        if node_id in nodes:
            raise PanelFormatError(
                f"duplicate node_id {node_id!r}", file=str(node_file), line=line
            )
        in_sample = _parse_bool01(
            (row.get("in_sample") or "").strip(), "in_sample", node_file, line
        )
        sex = (row.get("sex") or "").strip() or None
        birth_raw = (row.get("birth_year") or "").strip()
        birth_year = _parse_int(birth_raw, "birth_year", node_file, line) if birth_raw else None
        nodes[node_id] = NodeInfo(in_sample=in_sample, sex=sex, birth_year=birth_year)

    ties = []
    for line, row in _read_rows(tie_file, _TIE_FIELDS):
        ego = (row.get("ego_id") or "").strip()
        alter = (row.get("alter_id") or "").strip()
        for ref in (ego, alter):
            if ref not in nodes:
                raise PanelFormatError(
                    f"tie references unknown node {ref!r}", file=str(tie_file), line=line
                )
        tie_type = (row.get("tie_type") or "").strip()
        if tie_type not in TIE_TYPES:
            raise PanelFormatError(
                f"unknown tie_type {tie_type!r}", file=str(tie_file), line=line
            )
        wave_first = _parse_int(row.get("wave_first"), "wave_first", tie_file, line)
        wave_last = _parse_int(row.get("wave_last"), "wave_last", tie_file, line)
        nom_raw = (row.get("nominated_by_ego") or "").strip()
        if tie_type == "friend":
            nominated = _parse_bool01(nom_raw or "1", "nominated_by_ego", tie_file, line)
        else:
            nominated = True
        try:
            ties.append(
                TieRecord(ego, alter, tie_type, wave_first, wave_last, nominated)
            )
        except DataError as exc:
            raise PanelFormatError(str(exc), file=str(tie_file), line=line) from None

    traits = {}
    for line, row in _read_rows(trait_file, _TRAIT_FIELDS):
        node = (row.get("node_id") or "").strip()
        if node not in nodes:
            raise PanelFormatError(
                f"trait references unknown node {node!r}", file=str(trait_file), line=line
            )
        wave = _parse_int(row.get("wave"), "wave", trait_file, line)
        trait = (row.get("trait") or "").strip()
        if not trait:
            raise PanelFormatError("empty trait name", file=str(trait_file), line=line)
        value = _parse_float(row.get("value"), "value", trait_file, line)
        key = (node, wave, trait)
        if key in traits:
            raise PanelFormatError(
                f"duplicate observation for {key}", file=str(trait_file), line=line
            )
        traits[key] = value

    geo = {}
    for line, row in _read_rows(geo_file, _GEO_FIELDS) if geo_file is not None else ():
        node = (row.get("node_id") or "").strip()
        if node not in nodes:
            raise PanelFormatError(
                f"geo references unknown node {node!r}", file=str(geo_file), line=line
            )
        wave = _parse_int(row.get("wave"), "wave", geo_file, line)
        lat = _parse_float(row.get("latitude"), "latitude", geo_file, line)
        lon = _parse_float(row.get("longitude"), "longitude", geo_file, line)
        key = (node, wave)
        if key in geo:
            raise PanelFormatError(
                f"duplicate location for {key}", file=str(geo_file), line=line
            )
        geo[key] = (lat, lon)

    try:
        return Panel(nodes=nodes, ties=tuple(ties), traits=traits, geo=geo)
    except DataError as exc:
        raise PanelFormatError(str(exc), file=str(trait_file)) from None


def write_panel(panel: Panel, node_file, tie_file, trait_file, geo_file):
    """Write a Panel back to the four standard CSV files (sorted, stable)."""
    with open(node_file, "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(["node_id", "in_sample", "sex", "birth_year"])
        for node in sorted(panel.nodes, key=str):
            info = panel.nodes[node]
            w.writerow(
                [
                    node,
                    int(info.in_sample),
                    info.sex or "",
                    "" if info.birth_year is None else info.birth_year,
                ]
            )
    with open(tie_file, "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(
            ["ego_id", "alter_id", "tie_type", "wave_first", "wave_last", "nominated_by_ego"]
        )
        for t in sorted(
            panel.ties,
            key=lambda t: (str(t.ego), str(t.alter), t.tie_type, t.wave_first, t.wave_last),
        ):
            w.writerow(
                [t.ego, t.alter, t.tie_type, t.wave_first, t.wave_last, int(t.nominated_by_ego)]
            )
    with open(trait_file, "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(["node_id", "wave", "trait", "value"])
        for (node, wave, trait) in sorted(panel.traits, key=lambda k: (str(k[0]), k[1], k[2])):
            w.writerow([node, wave, trait, _fmt_number(panel.traits[(node, wave, trait)])])
    with open(geo_file, "w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle)
        w.writerow(["node_id", "wave", "latitude", "longitude"])
        for (node, wave) in sorted(panel.geo, key=lambda k: (str(k[0]), k[1])):
            lat, lon = panel.geo[(node, wave)]
            w.writerow([node, wave, _fmt_number(lat), _fmt_number(lon)])


def _fmt_number(x) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))
