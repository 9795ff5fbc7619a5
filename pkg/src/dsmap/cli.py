"""Command-line entry point: build, ground, generate, evaluate, export."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dsmap.builder import MapBuilder
from dsmap.config import PipelineConfig, load_config
from dsmap.errors import DsmError
from dsmap.evalgen.evaluate import evaluate_grounding, evaluate_segmentation
from dsmap.evalgen.querygen import generate_queries, read_queries, write_queries
from dsmap.evalgen.suites import SUITES
from dsmap.evalgen.synth import synth_scene
from dsmap.grounding.pipeline import ground
from dsmap.ingest.frames import read_sequence
from dsmap.mapio import load_map, save_map
from dsmap.perception.backends import BACKENDS, make_backend

log = logging.getLogger("dsmap")

EXPORT_FORMATS = ("ply",)


def _write_json(path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _overrides(args) -> dict:
    """Config overrides for every flag the user actually passed."""
    out: dict = {}

    def put(section, key, value):
        if value is not None:
            if section is None:
                out[key] = value
            else:
                out.setdefault(section, {})[key] = value

    put(None, "backend", getattr(args, "backend", None))
    put(None, "seed", getattr(args, "seed", None))
    put(None, "max_depth", getattr(args, "max_depth", None))
    put("window", "window_len", getattr(args, "window_len", None))
    put("window", "mc_samples", getattr(args, "mc_samples", None))
    for flag in ("t_v", "t_x", "t_g", "total_threshold"):
        put("fusion", flag, getattr(args, flag, None))
    put("grounding", "k", getattr(args, "k", None))
    if getattr(args, "no_relation_filter", False):
        put("grounding", "use_relation_filter", False)
    if getattr(args, "no_attributes", False):
        put("grounding", "use_attributes", False)
    put("querygen", "n_unique", getattr(args, "n_unique", None))
    put("querygen", "n_multiple", getattr(args, "n_multiple", None))
    if getattr(args, "seed", None) is not None:
        put("querygen", "seed", args.seed)
    return out


def _config(args) -> PipelineConfig:
    return load_config(getattr(args, "config", None), _overrides(args))


def cmd_build_map(args) -> int:
    cfg = _config(args)
    builder = MapBuilder(cfg, make_backend(cfg.backend))
    frames = read_sequence(args.manifest)
    dsm = builder.build(frames)
    save_map(dsm, args.out)
    report = builder.report.to_dict(len(dsm.objects))
    report["config"] = cfg.to_dict()
    if args.assoc_report:
        with open(args.assoc_report, "w", encoding="utf-8") as fh:
            for rec in builder.report.associations:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_json(args.report, report)
    return 0


def cmd_ground(args) -> int:
    cfg = _config(args)
    dsm = load_map(args.map)
    result = ground(dsm, args.query, make_backend(cfg.backend), cfg.grounding)
    if args.dump_views:
        out = Path(args.dump_views)
        out.mkdir(parents=True, exist_ok=True)
        for view in result.views:
            view.save(out / f"{view.spec.level}.png")
    payload = result.to_dict()
    payload["config"] = cfg.to_dict()
    _write_json(args.out, payload)
    return 0


def cmd_gen_queries(args) -> int:
    cfg = _config(args)
    queries = generate_queries(load_map(args.map), cfg.querygen)
    write_queries(args.out, queries)
    log.info("wrote %d queries to %s", len(queries), args.out)
    return 0


def cmd_eval_grounding(args) -> int:
    cfg = _config(args)
    report, records = evaluate_grounding(load_map(args.map), load_map(args.gt), read_queries(args.queries),
                                         make_backend(cfg.backend), cfg.grounding)
    payload = report.to_dict()
    payload["queries"] = records
    payload["config"] = cfg.to_dict()
    _write_json(args.report, payload)
    return 0


def cmd_eval_seg(args) -> int:
    cfg = _config(args)
    report = evaluate_segmentation(load_map(args.pred), load_map(args.gt), make_backend(cfg.backend))
    payload = report.to_dict()
    payload["config"] = cfg.to_dict()
    _write_json(args.report, payload)
    return 0


def cmd_synth_scene(args) -> int:
    if args.spec in SUITES:
        spec = SUITES[args.spec]()
    else:
        try:
            spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DsmError(f"cannot read scene spec {args.spec}: {exc}") from exc
    result = synth_scene(spec, args.out, seed=args.seed or 0)
    _write_json(None, {"frames": len(result.frames), "objects": len(result.gt.objects),
                       "manifest": str(result.manifest), "gt": str(result.gt_path)})
    return 0


def write_ply(path, points, colors=None) -> None:
    pts = np.asarray(points, dtype=np.float64)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
        for i, p in enumerate(pts):
            row = f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}"
            if colors is not None:
                c = colors[i]
                row += f" {int(c[0])} {int(c[1])} {int(c[2])}"
            fh.write(row + "\n")


def cmd_export(args) -> int:
    if args.format not in EXPORT_FORMATS:
        raise DsmError(f"unknown export format {args.format!r}; supported: {', '.join(EXPORT_FORMATS)}")
    dsm = load_map(args.map)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    objects = []
    for oid in sorted(dsm.objects):
        obj = dsm.objects[oid]
        fname = f"object_{oid:04d}.ply"
        write_ply(out / fname, obj.cloud.points, obj.cloud.colors)
        objects.append({"id": oid, "file": fname, "points": len(obj.cloud),
                        "caption": obj.caption.to_dict(), "bbox": obj.bbox.to_dict()})
    relations = [{"subject": s, "anchor": a, "descriptor": r.r_g_descriptor,
                  "distance": r.r_g_distance, "semantic": r.r_s}
                 for (s, a), r in sorted(dsm.relations.items())]
    _write_json(out / "summary.json", {"objects": objects, "relations": relations})
    return 0


def _add_common(p, *, fusion=False, window=False, grounding=False):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--seed", type=int)
    if window:
        p.add_argument("--max-depth", type=float, dest="max_depth")
        p.add_argument("--window-len", type=int, dest="window_len")
        p.add_argument("--mc-samples", type=int, dest="mc_samples")
    if fusion:
        p.add_argument("--t-v", type=float, dest="t_v")
        p.add_argument("--t-x", type=float, dest="t_x")
        p.add_argument("--t-g", type=float, dest="t_g")
        p.add_argument("--total-threshold", type=float, dest="total_threshold")
    if grounding:
        p.add_argument("--k", type=int)
        p.add_argument("--no-relation-filter", action="store_true", dest="no_relation_filter")
        p.add_argument("--no-attributes", action="store_true", dest="no_attributes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsmap", description=__doc__)
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="build a map from a frame manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="-", help="build report path (default stdout)")
    p.add_argument("--assoc-report", dest="assoc_report", help="per-frame association JSON Lines")
    _add_common(p, fusion=True, window=True)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("ground", help="ground one query in a map")
    p.add_argument("--map", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--dump-views", dest="dump_views")
    p.add_argument("--out", default="-")
    _add_common(p, grounding=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("gen-queries", help="generate grounding queries from a map")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-unique", type=int, dest="n_unique")
    p.add_argument("--n-multiple", type=int, dest="n_multiple")
    _add_common(p)
    p.set_defaults(func=cmd_gen_queries)

    p = sub.add_parser("eval-grounding", help="score grounding against a ground-truth map")
    p.add_argument("--map", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", default="-")
    _add_common(p, grounding=True)
    p.set_defaults(func=cmd_eval_grounding)

    p = sub.add_parser("eval-seg", help="score point labels against a ground-truth map")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("synth-scene", help="render a synthetic RGB-D sequence")
    p.add_argument("--spec", required=True, help=f"scene JSON file or a suite name ({', '.join(SUITES)})")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth_scene)

    p = sub.add_parser("export", help="export per-object point clouds and a scene summary")
    p.add_argument("--map", required=True)
    p.add_argument("--format", default="ply")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DsmError, ValueError, OSError, KeyError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
