"""Graph exports for visualization tools, plus the neighborhood smoothing
used to shade node colors. Smoothed values are for pictures only: they mix
each node's value with its neighbors', so feeding them back into the
statistical tests would manufacture the very clustering those tests look
for. SmoothedTrait is deliberately not a Mapping so the test entry points
reject it.
"""

import json
from dataclasses import dataclass
from typing import Optional
from xml.sax.saxutils import escape, quoteattr

from .errors import DataError
from .panel import NetworkSnapshot, Panel, classify_friendship, snapshot

EXPORT_FORMATS = ("dot", "graphml", "json")


@dataclass(frozen=True)
class SmoothedTrait:
    """Closed-neighborhood trait means, keyed by node.

    ``missing`` lists nodes with no observed value anywhere in their closed
    neighborhood. Not a Mapping, on purpose.
    """

    trait: str
    wave: int
    values: dict
    missing: tuple

    def value(self, node):
        return self.values.get(node)


def geodesic_smooth(snap: NetworkSnapshot, trait_values, trait: str = "trait") -> SmoothedTrait:
    """Unweighted mean over each node's closed neighborhood.

    Unobserved neighbors are simply left out of the average; a node whose
    closed neighborhood has no observed value at all is flagged missing.
    """
    for node in trait_values:
        if node not in snap.neighbors:
            raise DataError(f"trait value for unknown node {node!r}")
    values = {}
    missing = []
    for node in snap.nodes:
        members = (node, *snap.neighbors[node])
        observed = [trait_values[m] for m in members if m in trait_values]
        if observed:
            values[node] = sum(observed) / len(observed)
        else:
            missing.append(node)
    return SmoothedTrait(trait=trait, wave=snap.wave, values=values,
                         missing=tuple(missing))


def largest_component(snap: NetworkSnapshot) -> frozenset:
    """Node set of the largest connected component.

    Size ties break toward the component containing the smallest node id.
    An empty graph has no components, so the result is empty.
    """
    best = frozenset()
    best_key = None
    seen = set()
    for start in snap.nodes:
        if start in seen:
            continue
        component = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in snap.neighbors[u]:
                if v not in component:
                    component.add(v)
                    stack.append(v)
        seen |= component
        key = (-len(component), min(component))
        if best_key is None or key < best_key:
            best_key = key
            best = frozenset(component)
    return best


def _node_attrs(panel: Panel, snap: NetworkSnapshot, trait: Optional[str],
                smoothed: Optional[SmoothedTrait]):
    trait_values = panel.trait_values(trait, snap.wave) if trait else {}
    out = {}
    for node in snap.nodes:
        info = panel.nodes[node]
        attrs = {"in_sample": info.in_sample}
        if info.sex is not None:
            attrs["sex"] = info.sex
        if node in trait_values:
            attrs["trait"] = float(trait_values[node])
        if smoothed is not None and node in smoothed.values:
            attrs["smoothed"] = float(smoothed.values[node])
        out[node] = attrs
    return out


def _edge_attrs(snap: NetworkSnapshot):
    out = {}
    for a in snap.nodes:
        for b in snap.neighbors[a]:
            if not a < b:
                continue
            types = snap.edge_types.get((a, b), ())
            attrs = {"tie_type": ",".join(types)} if types else {}
            if "friend" in types or not types:
                direction = classify_friendship(snap, a, b)
                if direction != "none":
                    attrs["directionality"] = direction
            out[(a, b)] = attrs
    return out


def export_graph(
    panel: Panel,
    wave: int,
    tie_filter=None,
    fmt: str = "json",
    trait: Optional[str] = None,
    smooth: bool = False,
    largest_only: bool = False,
) -> str:
    """Serialize one wave's network for an external viewer.

    Node attributes: in_sample always, sex when known, the raw trait value
    when ``trait`` names one, its closed-neighborhood mean when ``smooth``
    is set. Edge attributes: the tie types on the edge and, for friend
    ties, the nomination directionality read from the smaller node id's
    side. Output is byte-stable: nodes and edges are emitted in sorted
    order and every writer is deterministic.
    """
    if fmt not in EXPORT_FORMATS:
        raise DataError(f"unknown export format {fmt!r}")
    if smooth and not trait:
        raise DataError("smoothing needs a trait name")
    snap = snapshot(panel, wave, tie_filter)
    if largest_only:
        keep = largest_component(snap)
        nodes = tuple(n for n in snap.nodes if n in keep)
        neighbors = {n: snap.neighbors[n] for n in nodes}
        edge_types = {k: v for k, v in snap.edge_types.items() if k[0] in keep}
        snap = NetworkSnapshot(wave=snap.wave, nodes=nodes, neighbors=neighbors,
                               nominations=snap.nominations,
                               edge_types=edge_types)
    smoothed = None
    if smooth:
        smoothed = geodesic_smooth(snap, panel.trait_values(trait, wave), trait)
    node_attrs = _node_attrs(panel, snap, trait, smoothed)
    edge_attrs = _edge_attrs(snap)
    if fmt == "json":
        return _to_json(snap, node_attrs, edge_attrs)
    if fmt == "dot":
        return _to_dot(snap, node_attrs, edge_attrs)
    return _to_graphml(snap, node_attrs, edge_attrs)


def _to_json(snap, node_attrs, edge_attrs) -> str:
    doc = {
        "wave": snap.wave,
        "directed": False,
        "nodes": [
            dict(node_attrs[n], id=n) for n in snap.nodes
        ],
        "links": [
            dict(edge_attrs[(a, b)], source=a, target=b)
            for (a, b) in sorted(edge_attrs)
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_graph_json(text: str) -> dict:
    return json.loads(text)


def _dot_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace('"', '\\"') + '"'


def _to_dot(snap, node_attrs, edge_attrs) -> str:
    lines = [f"graph wave_{snap.wave} {{"]
    for n in snap.nodes:
        attrs = node_attrs[n]
        inner = ", ".join(f"{k}={_dot_value(attrs[k])}" for k in sorted(attrs))
        lines.append(f'  "{n}" [{inner}];' if inner else f'  "{n}";')
    for (a, b) in sorted(edge_attrs):
        attrs = edge_attrs[(a, b)]
        inner = ", ".join(f"{k}={_dot_value(attrs[k])}" for k in sorted(attrs))
        suffix = f" [{inner}]" if inner else ""
        lines.append(f'  "{a}" -- "{b}"{suffix};')
    lines.append("}")
    return "\n".join(lines) + "\n"


_GRAPHML_TYPES = {bool: "boolean", int: "long", float: "double", str: "string"}


def _graphml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return escape(str(v))


def _to_graphml(snap, node_attrs, edge_attrs) -> str:
    keys = {}

    def declare(domain, attrs):
        for k in attrs:
            kind = _GRAPHML_TYPES[type(attrs[k])]
            keys.setdefault((domain, k), kind)

    for attrs in node_attrs.values():
        declare("node", attrs)
    for attrs in edge_attrs.values():
        declare("edge", attrs)
    lines = [
        '<?xml version="1.0" encoding="utf-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
    ]
    for domain, name in sorted(keys):
        lines.append(
            f'  <key id="{domain}_{name}" for="{domain}" '
            f'attr.name="{name}" attr.type="{keys[(domain, name)]}"/>'
        )
    lines.append(f'  <graph id="wave_{snap.wave}" edgedefault="undirected">')
    for n in snap.nodes:
        attrs = node_attrs[n]
        if attrs:
            lines.append(f"    <node id={quoteattr(str(n))}>")
            for k in sorted(attrs):
                lines.append(
                    f'      <data key="node_{k}">{_graphml_value(attrs[k])}</data>'
                )
            lines.append("    </node>")
        else:
            lines.append(f"    <node id={quoteattr(str(n))}/>")
    for (a, b) in sorted(edge_attrs):
        attrs = edge_attrs[(a, b)]
        src, tgt = quoteattr(str(a)), quoteattr(str(b))
        if attrs:
            lines.append(f"    <edge source={src} target={tgt}>")
            for k in sorted(attrs):
                lines.append(
                    f'      <data key="edge_{k}">{_graphml_value(attrs[k])}</data>'
                )
            lines.append("    </edge>")
        else:
            lines.append(f"    <edge source={src} target={tgt}/>")
    lines.append("  </graph>")
    lines.append("</graphml>")
    return "\n".join(lines) + "\n"
