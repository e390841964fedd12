"""Command-line entry point.

Every subcommand loads its inputs, runs one library operation, and writes
JSON results plus CSV summaries into ``--out``. Each JSON result embeds a
timestamp-free manifest, each CSV row carries the manifest id, and a
``*_manifest.json`` sidecar records the full manifest including the run
timestamp. Result bytes are a pure function of (inputs, parameters, seed).

Exit codes: 0 success, 1 data or usage error, 2 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from . import cluster as cluster_mod
from . import gee as gee_mod
from . import panel as panel_mod
from . import simulate as sim_mod
from . import viz as viz_mod
from .errors import DataError, NumericalError
from .manifest import build_manifest


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _split_list(raw):
    if not raw:
        return []
    return [part.strip() for part in raw.split(",") if part.strip()]


def build_parser() -> _Parser:
    parser = _Parser(prog="netcontagion")
    parser.add_argument("--config", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    ct = sub.add_parser("cluster-test",
                        help="permutation clustering test by geodesic distance")
    ct.add_argument("--panel", required=True,
                    help="directory with nodes/ties/traits[/geo] CSV files")
    ct.add_argument("--wave", type=int, required=True)
    ct.add_argument("--trait", required=True)
    ct.add_argument("--max-d", type=int, required=True)
    ct.add_argument("--replicates", type=int, default=1000)
    ct.add_argument("--seed", type=int, default=0)
    ct.add_argument("--adjust-for", default="",
                    help="comma-separated covariates; switches the statistic "
                         "to pairwise correlation of residuals")
    ct.add_argument("--tie-filter", default="")
    ct.add_argument("--plot-data", action="store_true",
                    help="also write per-distance bar-plot data")
    ct.add_argument("--out", default=".")

    gee = sub.add_parser("gee-fit", help="dyadic longitudinal regression")
    gee.add_argument("--panel", required=True)
    gee.add_argument("--trait", required=True)
    gee.add_argument("--tie-type", default="friend")
    gee.add_argument("--link", choices=("identity", "logit"), default="identity")
    gee.add_argument("--covariates", default="")
    gee.add_argument("--cluster", choices=("ego", "dyad"), default="ego")
    mode = gee.add_mutually_exclusive_group()
    mode.add_argument("--directional", action="store_true",
                      help="per-friendship-class alter effects")
    mode.add_argument("--geo-interaction", action="store_true",
                      help="interact the alter effect with geographic distance")
    mode.add_argument("--lagged-change", action="store_true",
                      help="change-on-change specification")
    gee.add_argument("--seed", type=int, default=0)
    gee.add_argument("--out", default=".")

    sim = sub.add_parser("simulate", help="ground-truth simulators")
    sim_sub = sim.add_subparsers(dest="sim_command", metavar="WHAT")

    pb = sim_sub.add_parser("path-bias",
                            help="actual vs shortest vs sampled-shortest paths")
    pb.add_argument("--generator", required=True,
                    choices=sim_mod.GENERATORS)
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--edge-p", type=float, help="edge probability (erdos_renyi)")
    pb.add_argument("--k", type=int, help="ring degree (watts_strogatz)")
    pb.add_argument("--beta", type=float, help="rewiring rate (watts_strogatz)")
    pb.add_argument("--degrees", default="",
                    help="comma-separated degree sequence (configuration_model)")
    pb.add_argument("--p", type=float, required=True,
                    help="per-step transmission probability")
    pb.add_argument("--frames", required=True,
                    help="comma-separated frame:param, e.g. "
                         "node_sampling:0.3,edge_sampling:0.5")
    pb.add_argument("--sources", type=int, default=1)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--out", default=".")

    abm = sim_sub.add_parser("abm", help="agent-based panel generator")
    abm.add_argument("--spec", required=True, help="ABM spec JSON file")
    abm.add_argument("--seed", type=int, default=None,
                     help="override the seed in the spec file")
    abm.add_argument("--out", default=".")

    for attach in (sim_sub, sub):
        val = attach.add_parser("validate",
                                help="detection-rate matrix over an ABM grid")
        val.add_argument("--grid", required=True, help="grid JSON file")
        val.add_argument("--replicates", type=int, default=None,
                         help="override the replicate count in the grid file")
        val.add_argument("--seed", type=int, default=None,
                         help="override the seed in the grid file")
        val.add_argument("--out", default=".")

    ev = sub.add_parser("export-viz", help="write one wave for a graph viewer")
    ev.add_argument("--panel", required=True)
    ev.add_argument("--wave", type=int, required=True)
    ev.add_argument("--tie-filter", default="")
    ev.add_argument("--trait", default=None)
    ev.add_argument("--smooth", default=None, metavar="TRAIT",
                    help="attach closed-neighborhood means of this trait")
    ev.add_argument("--largest-component", action="store_true")
    ev.add_argument("--format", choices=viz_mod.EXPORT_FORMATS, required=True)
    ev.add_argument("-o", "--output", required=True)
    return parser


# ---------------------------------------------------------------------------
# Config file expansion
# ---------------------------------------------------------------------------


def _apply_config(argv):
    """Fold ``--config FILE`` JSON values in as flag tokens.

    Config values become tokens right after the subcommand, so flags given
    on the command line still win.
    """
    rest = []
    config_path = None
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file argument")
            config_path = argv[i + 1]
            i += 2
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
            i += 1
        else:
            rest.append(arg)
            i += 1
    if config_path is None:
        return rest
    if not rest or rest[0].startswith("-"):
        raise UsageError("--config requires a subcommand")
    try:
        with open(config_path, encoding="utf-8") as handle:
            config = json.load(handle)
    except json.JSONDecodeError as exc:
        raise DataError(f"config {config_path}: invalid JSON ({exc})") from None
    if not isinstance(config, dict):
        raise DataError(f"config {config_path}: expected a JSON object")
    head_len = 1
    if rest[0] == "simulate" and len(rest) > 1 and not rest[1].startswith("-"):
        head_len = 2
    tokens = []
    for key in sorted(config):
        flag = "--" + str(key).replace("_", "-")
        value = config[key]
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
        elif isinstance(value, list):
            tokens.extend([flag, ",".join(str(v) for v in value)])
        else:
            tokens.extend([flag, str(value)])
    return rest[:head_len] + tokens + rest[head_len:]


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _load_panel_dir(path):
    base = Path(path)
    files = {name: base / f"{name}.csv" for name in ("nodes", "ties", "traits")}
    missing = [str(p) for p in files.values() if not p.is_file()]
    if missing:
        raise DataError(f"missing panel file(s): {', '.join(missing)}")
    geo = base / "geo.csv"
    inputs = dict(files)
    geo_file = None
    if geo.is_file():
        inputs["geo"] = geo
        geo_file = geo
    panel = panel_mod.load_panel(files["nodes"], files["ties"], files["traits"],
                                 geo_file)
    return panel, inputs


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames,
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _outdir(ns) -> Path:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(outdir, stem, manifest):
    _write_json(outdir / f"{stem}_manifest.json", manifest.to_dict())


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_cluster_test(ns):
    panel, inputs = _load_panel_dir(ns.panel)
    tie_filter = _split_list(ns.tie_filter) or None
    adjust = _split_list(ns.adjust_for)
    snap = panel_mod.snapshot(panel, ns.wave, tie_filter)
    if adjust:
        values = cluster_mod.residualize_trait(panel, ns.trait, adjust, ns.wave)
        statistic = "correlation"
    else:
        values = panel.trait_values(ns.trait, ns.wave)
        statistic = "risk_ratio"
    result = cluster_mod.cluster_test(
        snap, values, max_d=ns.max_d, replicates=ns.replicates, seed=ns.seed,
        trait=ns.trait, statistic=statistic,
    )
    manifest = build_manifest(
        "cluster-test",
        {
            "panel": str(ns.panel), "wave": ns.wave, "trait": ns.trait,
            "max_d": ns.max_d, "replicates": ns.replicates,
            "adjust_for": adjust, "tie_filter": _split_list(ns.tie_filter),
            "statistic": statistic,
        },
        ns.seed, inputs,
    )
    outdir = _outdir(ns)
    _write_json(outdir / "cluster_test.json",
                {"manifest": manifest.embed(), "result": result.to_dict()})
    rows = result.summary_rows()
    for row in rows:
        row["manifest_id"] = manifest.manifest_id
    _write_csv(outdir / "cluster_test_summary.csv",
               list(rows[0].keys()) if rows else ["distance"], rows)
    if ns.plot_data:
        plot_rows = []
        for e in result.distances:
            nulls = [v for v in e.null_values if v == v]
            plot_rows.append({
                "distance": e.distance,
                "observed": "" if e.observed is None else e.observed,
                "null_mean": sum(nulls) / len(nulls) if nulls else "",
                "ci_low": "" if e.ci_low is None else e.ci_low,
                "ci_high": "" if e.ci_high is None else e.ci_high,
                "significant": int(e.significant),
                "manifest_id": manifest.manifest_id,
            })
        _write_csv(outdir / "cluster_test_plot.csv",
                   ["distance", "observed", "null_mean", "ci_low", "ci_high",
                    "significant", "manifest_id"], plot_rows)
    _finish(outdir, "cluster_test", manifest)


def _cmd_gee_fit(ns):
    panel, inputs = _load_panel_dir(ns.panel)
    covariates = _split_list(ns.covariates)
    spec = gee_mod.ModelSpec(link=ns.link, cluster=ns.cluster)
    mode = ("directional" if ns.directional
            else "geo_interaction" if ns.geo_interaction
            else "lagged_change" if ns.lagged_change
            else "standard")
    doc = {}
    if mode == "lagged_change":
        fit = gee_mod.lagged_change_model(panel, ns.trait, [ns.tie_type],
                                          covariates, spec)
        drop_report = None
    else:
        rows, report = gee_mod.build_dyad_rows(panel, ns.trait, [ns.tie_type],
                                               covariates)
        drop_report = report.to_dict()
        if mode == "directional":
            contrast = gee_mod.directional_contrast(rows, spec)
            doc["directional"] = {
                k: v for k, v in contrast.to_dict().items() if k != "fit"
            }
            fit = contrast.fit
        elif mode == "geo_interaction":
            fit = gee_mod.distance_interaction(rows, spec)
        else:
            fit = gee_mod.fit_gee(rows, spec)
    manifest = build_manifest(
        "gee-fit",
        {
            "panel": str(ns.panel), "trait": ns.trait, "tie_type": ns.tie_type,
            "link": ns.link, "covariates": covariates, "cluster": ns.cluster,
            "mode": mode,
        },
        ns.seed, inputs,
    )
    doc["manifest"] = manifest.embed()
    doc["model"] = fit.to_dict()
    doc["drop_report"] = drop_report
    outdir = _outdir(ns)
    _write_json(outdir / "gee_fit.json", doc)
    coef_rows = [
        {
            "term": term,
            "estimate": fit.coef(term),
            "robust_se": fit.se(term),
            "z": fit.z_value(term),
            "p_value": fit.p_value(term),
            "manifest_id": manifest.manifest_id,
        }
        for term in fit.terms
    ]
    _write_csv(outdir / "gee_fit_coefficients.csv",
               ["term", "estimate", "robust_se", "z", "p_value", "manifest_id"],
               coef_rows)
    _finish(outdir, "gee_fit", manifest)


def _parse_frames(raw):
    frames = []
    for part in _split_list(raw):
        if ":" not in part:
            raise DataError(
                f"frame {part!r} must look like name:param, e.g. node_sampling:0.3"
            )
        name, param = part.split(":", 1)
        name = name.strip()
        if name == "out_degree_censoring":
            frames.append((name, int(param)))
        else:
            frames.append((name, float(param)))
    if not frames:
        raise DataError("no sampling frames given")
    return frames


def _network_spec_from_flags(ns):
    if ns.generator == "erdos_renyi":
        if ns.edge_p is None:
            raise DataError("erdos_renyi needs --edge-p")
        params = {"p": ns.edge_p}
    elif ns.generator == "watts_strogatz":
        if ns.k is None or ns.beta is None:
            raise DataError("watts_strogatz needs --k and --beta")
        params = {"k": ns.k, "beta": ns.beta}
    else:
        degrees = [int(d) for d in _split_list(ns.degrees)]
        if not degrees:
            raise DataError("configuration_model needs --degrees")
        params = {"degrees": degrees}
    return sim_mod.SyntheticNetworkSpec(ns.generator, ns.n, params, seed=ns.seed)


def _cmd_path_bias(ns):
    spec = _network_spec_from_flags(ns)
    frames = _parse_frames(ns.frames)
    records, summary = sim_mod.path_bias_experiment(
        spec, ns.p, frames, n_sources=ns.sources, seed=ns.seed
    )
    manifest = build_manifest(
        "simulate path-bias",
        {
            "network": spec.to_dict(), "transmission_p": ns.p,
            "frames": [f"{name}:{param}" for name, param in frames],
            "sources": ns.sources,
        },
        ns.seed, {},
    )
    outdir = _outdir(ns)
    record_rows = [
        {
            "source": r.source,
            "target": r.target,
            "actual_len": r.actual_len,
            "full_shortest_len": r.full_shortest_len,
            "sampled_shortest_len": (
                "" if r.sampled_shortest_len is None else r.sampled_shortest_len
            ),
            "frame": r.frame,
            "manifest_id": manifest.manifest_id,
        }
        for r in records
    ]
    _write_csv(outdir / "path_bias_records.csv",
               ["source", "target", "actual_len", "full_shortest_len",
                "sampled_shortest_len", "frame", "manifest_id"], record_rows)
    _write_json(outdir / "path_bias_summary.json",
                {"manifest": manifest.embed(), "frames": summary,
                 "n_records": len(records)})
    _finish(outdir, "path_bias", manifest)


def _cmd_abm(ns):
    spec_path = Path(ns.spec)
    try:
        spec_dict = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"spec {spec_path}: invalid JSON ({exc})") from None
    if ns.seed is not None:
        spec_dict["seed"] = ns.seed
    spec = sim_mod.ABMSpec.from_dict(spec_dict)
    panel = sim_mod.abm_generate_panel(spec)
    manifest = build_manifest(
        "simulate abm", {"spec": spec.to_dict()}, spec.seed,
        {"spec": spec_path},
    )
    outdir = _outdir(ns)
    panel_mod.write_panel(
        panel, outdir / "nodes.csv", outdir / "ties.csv",
        outdir / "traits.csv", outdir / "geo.csv",
    )
    _finish(outdir, "abm", manifest)


def _cmd_validate(ns):
    grid_path = Path(ns.grid)
    try:
        grid = json.loads(grid_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"grid {grid_path}: invalid JSON ({exc})") from None
    if not isinstance(grid, dict) or "cells" not in grid:
        raise DataError(f"grid {grid_path}: expected an object with 'cells'")
    cells = []
    for entry in grid["cells"]:
        if "name" not in entry or "spec" not in entry:
            raise DataError("each grid cell needs 'name' and 'spec'")
        cells.append((entry["name"], sim_mod.ABMSpec.from_dict(entry["spec"])))
    replicates = ns.replicates or int(grid.get("replicates", 20))
    seed = ns.seed if ns.seed is not None else int(grid.get("seed", 0))
    analysis = grid.get("analysis", {})
    report = sim_mod.validation_harness(cells, analysis, replicates, seed=seed)
    manifest = build_manifest(
        "validate",
        {"grid": str(grid_path), "replicates": replicates, "analysis": analysis},
        seed, {"grid": grid_path},
    )
    outdir = _outdir(ns)
    matrix_fields = [
        "cell", "influence", "observable_homophily", "latent_homophily",
        "shared_context", "replicates", "n_ok", "detection_rate", "mean_coef",
        "sd_coef", "n_failures", "manifest_id",
    ]
    matrix_rows = []
    for row in report.rows:
        truth = row["ground_truth"]
        matrix_rows.append({
            "cell": row["cell"],
            "influence": int(truth["influence"]),
            "observable_homophily": int(truth["observable_homophily"]),
            "latent_homophily": int(truth["latent_homophily"]),
            "shared_context": int(truth["shared_context"]),
            "replicates": row["replicates"],
            "n_ok": row["n_ok"],
            "detection_rate": (
                "" if row["detection_rate"] is None else row["detection_rate"]
            ),
            "mean_coef": "" if row["mean_coef"] is None else row["mean_coef"],
            "sd_coef": "" if row["sd_coef"] is None else row["sd_coef"],
            "n_failures": row["n_failures"],
            "manifest_id": manifest.manifest_id,
        })
    _write_csv(outdir / "validation_matrix.csv", matrix_fields, matrix_rows)
    _write_json(outdir / "validation_report.json",
                {"manifest": manifest.embed(), "report": report.to_dict()})
    _finish(outdir, "validate", manifest)


def _cmd_export_viz(ns):
    panel, inputs = _load_panel_dir(ns.panel)
    if ns.trait and ns.smooth and ns.trait != ns.smooth:
        raise DataError("--trait and --smooth must name the same trait")
    trait = ns.smooth or ns.trait
    text = viz_mod.export_graph(
        panel, ns.wave,
        tie_filter=_split_list(ns.tie_filter) or None,
        fmt=ns.format, trait=trait, smooth=bool(ns.smooth),
        largest_only=ns.largest_component,
    )
    manifest = build_manifest(
        "export-viz",
        {
            "panel": str(ns.panel), "wave": ns.wave,
            "tie_filter": _split_list(ns.tie_filter), "trait": trait,
            "smooth": bool(ns.smooth),
            "largest_component": ns.largest_component, "format": ns.format,
        },
        None, inputs,
    )
    mid = manifest.manifest_id
    if ns.format == "json":
        doc = json.loads(text)
        doc["manifest_id"] = mid
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    elif ns.format == "dot":
        text = f"// manifest {mid}\n" + text
    else:
        first_line, rest = text.split("\n", 1)
        text = f"{first_line}\n<!-- manifest {mid} -->\n{rest}"
    output = Path(ns.output)
    if output.parent != Path(""):
        output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(text, encoding="utf-8")
    _write_json(str(output) + ".manifest.json", manifest.to_dict())


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv)
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required")
        if ns.command == "cluster-test":
            _cmd_cluster_test(ns)
        elif ns.command == "gee-fit":
            _cmd_gee_fit(ns)
        elif ns.command == "simulate":
            if ns.sim_command == "path-bias":
                _cmd_path_bias(ns)
            elif ns.sim_command == "abm":
                _cmd_abm(ns)
            elif ns.sim_command == "validate":
                _cmd_validate(ns)
            else:
                raise UsageError(
                    "simulate needs one of: path-bias, abm, validate"
                )
        elif ns.command == "validate":
            _cmd_validate(ns)
        else:
            _cmd_export_viz(ns)
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
