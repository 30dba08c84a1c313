"""``pifield`` command line: synth, sample, train, reconstruct, texture, eval, ablation.

Every command takes a JSON ``--config`` (validated before any file is written)
plus the usual ``--seed``/``--out`` pair. Failures print a JSON object to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import jsonschema
import numpy as np

from . import shapes
from .camera import WeakPerspectiveCamera, fit_camera, yaw_sweep
from .extract import grid_bounds, texture_vertices
from .featext import read_ppm, save_image_set
from .mesh import load_obj, save_obj
from .metrics import evaluate, occupancy_iou
from .occupancy import NotWatertightError, is_watertight
from .pipeline import (ablation_table, fit_surface, fit_texture, load_checkpoint,
                       reconstruct, run_ablation, save_checkpoint)
from .render import rasterize
from .sampler import SamplingConfig, sample_occupancy, sample_texture
from .scene import Subject, View, two_tone
from .tensorio import write_tensor
from .train import TrainConfig, derive_rng

log = logging.getLogger("pifield")

DEFAULTS = {
    "seed": 0,
    "views": 4,
    "grid": 128,
    "preset": "desk",
    "camera": {"image_size": [512, 512], "margin": 0.1, "light_dir": [0.0, 0.0, 1.0]},
    "extractor": {"levels": 4, "projection_dim": 16},
    "model": {"embed_layer": 3},
    "sampling": {},
    "train": {},
    "texture_train": {},
    "eval": {"chamfer_samples": 10000},
}

_NUM = {"type": "number"}
_INT = {"type": "integer"}


def _closed(props, **kw):
    return {"type": "object", "properties": props, "additionalProperties": False, **kw}


def _dataclass_schema(cls):
    types = {"int": _INT, "float": _NUM, "bool": {"type": "boolean"}, "str": {"type": "string"},
             "tuple": {"type": "array", "items": _NUM}}
    props = {}
    for f in fields(cls):
        t = str(f.type)
        schema = dict(types.get(t.split(" |")[0], {}))
        if "None" in t and "type" in schema:
            schema["type"] = [schema["type"], "null"]
        props[f.name] = schema
    return _closed(props)


SCHEMA = _closed({
    "seed": {"type": "integer", "minimum": 0},
    "views": {"type": "integer", "minimum": 1},
    "grid": {"type": "integer", "minimum": 2},
    "preset": {"enum": ["paper", "desk"]},
    "camera": _closed({"image_size": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2},
                       "margin": _NUM,
                       "light_dir": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}}),
    "extractor": _closed({"levels": {"type": "integer", "minimum": 1},
                          "projection_dim": {"type": ["integer", "null"], "minimum": 1}}),
    "model": _closed({"embed_layer": {"type": ["integer", "null"], "minimum": 0}}),
    "sampling": _dataclass_schema(SamplingConfig),
    "train": _dataclass_schema(TrainConfig),
    "texture_train": _dataclass_schema(TrainConfig),
    "eval": _closed({"chamfer_samples": {"type": "integer", "minimum": 1}}),
})


class CliError(Exception):
    def __init__(self, message, path=None, kind="error"):
        super().__init__(message)
        self.path = path
        self.kind = kind


def load_config(path=None, overrides=None):
    """Defaults deep-merged with the JSON file and then CLI overrides; schema-checked."""
    cfg = copy.deepcopy(DEFAULTS)
    user = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise CliError(f"config file not found: {p}", str(p), "missing_file")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config is not valid JSON: {exc}", str(p), "config") from None
    for src in (user, overrides or {}):
        try:
            jsonschema.validate(src, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
            raise CliError(f"config invalid at {where}: {exc.message}", path, "config") from None
        for k, v in src.items():
            if isinstance(v, dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    return cfg


def sampling_config(cfg, **kw):
    return SamplingConfig(**{"seed": cfg["seed"], **cfg["sampling"], **kw})


def train_config(cfg, key="train"):
    base = TrainConfig.texture if key == "texture_train" else TrainConfig.surface
    return base(**{"seed": cfg["seed"], **cfg[key]})


# --- data directories ------------------------------------------------------------

FIXTURES = {
    "sphere": lambda: shapes.icosphere(4, 1.0),
    "torus": lambda: shapes.torus(1.0, 0.4, axis="z"),
    "capsule": lambda: shapes.capsule(),
    "union": lambda: shapes.sphere_union(),
    "two-tone": lambda: two_tone(shapes.icosphere(4, 1.0)),
}


def _load_mesh(path):
    p = Path(path)
    if not p.exists():
        raise CliError(f"mesh not found: {p}", str(p), "missing_file")
    return load_obj(p)


def load_subject(data_dir):
    """Mesh, cameras and RGB views written by ``synth``."""
    d = Path(data_dir)
    manifest = d / "subject.json"
    if not manifest.exists():
        raise CliError(f"not a synth directory (no subject.json): {d}", str(manifest), "missing_file")
    info = json.loads(manifest.read_text())
    mesh = _load_mesh(d / info["mesh"])
    views = []
    for stem in info["views"]:
        cam_path = d / f"{stem}_camera.json"
        rgb_path = d / f"{stem}_rgb.ppm"
        for p in (cam_path, rgb_path):
            if not p.exists():
                raise CliError(f"missing view file {p}", str(p), "missing_file")
        cam = WeakPerspectiveCamera.from_json(cam_path.read_text())
        try:
            rgb = read_ppm(rgb_path)
        except ValueError as exc:
            raise CliError(str(exc), str(rgb_path), "corrupt_file") from None
        views.append(View(cam, rgb))
    return Subject(mesh, views)


def _pick_views(subject, n):
    if n > len(subject.views):
        raise CliError(f"asked for {n} views, data has {len(subject.views)}")
    if n == 1:
        return subject.views[:1]
    # spread the chosen views evenly over the sweep
    idx = sorted({int(round(k * len(subject.views) / n)) % len(subject.views) for k in range(n)})
    return [subject.views[i] for i in idx]


# --- commands ------------------------------------------------------------------------

def cmd_synth(args, cfg):
    if args.mesh:
        mesh = _load_mesh(args.mesh)
    else:
        mesh = FIXTURES[args.shape]()
    report = is_watertight(mesh)
    if not report:
        raise CliError(f"mesh is not watertight ({report.boundary_edges} boundary, "
                       f"{report.nonmanifold_edges} non-manifold edges)", args.mesh, "not_watertight")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cam_cfg = cfg["camera"]
    base = fit_camera(mesh, tuple(cam_cfg["image_size"]), cam_cfg["margin"])
    stems = []
    for k, cam in enumerate(yaw_sweep(cfg["views"], base)):
        stem = f"view_{k:03d}"
        r = rasterize(mesh, cam, cam_cfg["light_dir"])
        save_image_set(out, stem, r)
        (out / f"{stem}_camera.json").write_text(cam.to_json() + "\n")
        stems.append(stem)
    save_obj(mesh, out / "mesh.obj")
    (out / "subject.json").write_text(json.dumps({"mesh": "mesh.obj", "views": stems}, indent=2) + "\n")
    return {"views": len(stems), "out": str(out)}


def cmd_sample(args, cfg):
    subject = load_subject(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = sampling_config(cfg)
    rng = derive_rng(cfg["seed"], "points", 0, 0)
    if args.kind == "texture":
        batch = sample_texture(subject.mesh, scfg, rng)
        write_tensor(out / "texture_points.pift", batch.points)
        write_tensor(out / "texture_labels.pift", batch.labels)
        write_tensor(out / "texture_sources.pift", batch.source_points)
    else:
        batch = sample_occupancy(subject.mesh, subject.oracle, scfg, rng)
        write_tensor(out / "occupancy_points.pift", batch.points)
        write_tensor(out / "occupancy_labels.pift", batch.labels[:, None])
    return {"points": len(batch)}


def _write_report(out, name, report):
    (out / f"{name}_report.jsonl").write_text(report.to_jsonl())
    # wall time is the only nondeterministic output; it lives in its own file
    (out / f"{name}_meta.json").write_text(json.dumps({"wall_time_s": report.wall_time_s}) + "\n")


def cmd_train(args, cfg):
    subjects = [load_subject(d) for d in args.data]
    tcfg = train_config(cfg)
    ex, net, report = fit_surface(subjects, tcfg, sampling_config(cfg), cfg["preset"],
                                  cfg["extractor"]["levels"], cfg["extractor"]["projection_dim"],
                                  cfg["model"]["embed_layer"])
    out = Path(args.out)
    save_checkpoint(out, net, ex, tcfg, tcfg.epochs, "surface")
    _write_report(out, "surface", report)
    return {"checksum": report.checksum, "final_loss": report.epoch_losses[-1]}


def cmd_reconstruct(args, cfg):
    net, ex, _ = load_checkpoint(args.checkpoint, "surface")
    subject = load_subject(args.data)
    views = _pick_views(subject, args.views if args.views is not None else 1)
    bounds = grid_bounds(subject.mesh.bounds())
    mesh, grid = reconstruct(net, ex, views, bounds, cfg["grid"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if mesh.is_empty:
        log.warning("field never crosses 0.5 inside the grid; writing an empty mesh")
    save_obj(mesh, out / "recon.obj")
    write_tensor(out / "grid.pift", grid.values)
    (out / "grid_bounds.json").write_text(grid.bounds_json() + "\n")
    iou = occupancy_iou(grid, subject.oracle, bounds, cfg["grid"])
    (out / "grid_iou.json").write_text(json.dumps({"iou": iou}) + "\n")
    return {"vertices": len(mesh.vertices), "triangles": len(mesh.triangles), "iou": iou}


def cmd_texture(args, cfg):
    subjects = [load_subject(d) for d in args.data]
    out = Path(args.out)
    ckpt = Path(args.checkpoint)
    _, ex_v, _ = load_checkpoint(ckpt, "surface")
    if args.train:
        tcfg = train_config(cfg, "texture_train")
        ex_c, net_c, report = fit_texture(subjects, ex_v, tcfg, sampling_config(cfg),
                                          cfg["preset"], cfg["extractor"]["levels"],
                                          cfg["extractor"]["projection_dim"],
                                          cfg["model"]["embed_layer"])
        save_checkpoint(ckpt, net_c, ex_c, tcfg, tcfg.epochs, "texture")
        _write_report(ckpt, "texture", report)
    net_c, ex_c, _ = load_checkpoint(ckpt, "texture")
    mesh = _load_mesh(args.mesh)
    views = _pick_views(subjects[0], args.views if args.views is not None else 1)
    colored = texture_vertices(mesh, net_c, ex_c, ex_v, views)
    out.mkdir(parents=True, exist_ok=True)
    save_obj(colored, out / "textured.obj")
    result = {"vertices": len(colored.vertices)}
    gt = subjects[0].mesh
    if gt.vertex_colors is not None and len(gt.vertex_colors):
        from .mesh import Bvh
        pt, _, tri = Bvh(gt).closest(colored.vertices)
        ref = _surface_colors(gt, pt, tri)
        result["mean_color_error"] = float(np.linalg.norm(colored.vertex_colors - ref, axis=1).mean())
    return result


def _surface_colors(mesh, points, tri):
    """Barycentric vertex-color interpolation at points lying on triangles ``tri``."""
    a, b, c = (mesh.vertices[mesh.triangles[tri, k]] for k in range(3))
    v0, v1, v2 = b - a, c - a, points - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    bary = np.stack([1 - v - w, v, w], axis=1)
    return np.einsum("nk,nkc->nc", bary, mesh.vertex_colors[mesh.triangles[tri]])


def cmd_eval(args, cfg):
    recon = _load_mesh(args.recon)
    subject = load_subject(args.data)
    gt = _load_mesh(args.gt) if args.gt else subject.mesh
    iou = None
    if args.iou:
        p = Path(args.iou)
        if not p.exists():
            raise CliError(f"missing IoU file {p}", str(p), "missing_file")
        iou = json.loads(p.read_text())["iou"]
    if recon.is_empty:
        raise CliError("reconstruction is empty", args.recon, "empty_mesh")
    report = evaluate(recon, gt, subject.views[0].camera, cfg["eval"]["chamfer_samples"],
                      cfg["seed"], cfg["camera"]["light_dir"], iou)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(report.to_json() + "\n")
    print(report.table())
    return None


def cmd_ablation(args, cfg):
    # single-view, per-shape models; --views and --grid widen the run when given
    tcfg = TrainConfig.surface(**{"seed": cfg["seed"], "epochs": 150, "points_per_object": 3000,
                                  **cfg["train"]})
    rows = run_ablation(cfg=tcfg, n_views=1 if args.views is None else cfg["views"],
                        seed=cfg["seed"],
                        resolution=48 if args.grid is None else cfg["grid"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table + "\n")
    print(table)
    return None


# --- entry point -----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--views", type=int, help="number of views")
    common.add_argument("--grid", type=int, help="extraction grid resolution per axis")
    common.add_argument("--preset", choices=["paper", "desk"], help="MLP width preset")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pifield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a yaw sweep of a mesh")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--mesh", help="watertight OBJ")
    g.add_argument("--shape", choices=sorted(FIXTURES), help="built-in fixture")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("sample", parents=[common], help="write occupancy or texture samples")
    s.add_argument("--data", required=True)
    s.add_argument("--kind", choices=["occupancy", "texture"], default="occupancy")
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("train", parents=[common], help="train the surface field")
    s.add_argument("--data", required=True, nargs="+", help="synth directories")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("reconstruct", parents=[common], help="extract the 0.5 iso-surface")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(fn=cmd_reconstruct)

    s = sub.add_parser("texture", parents=[common], help="train and apply the color field")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.add_argument("--mesh", required=True, help="mesh to color, e.g. recon.obj")
    s.add_argument("--no-train", dest="train", action="store_false",
                   help="reuse an existing texture checkpoint")
    s.set_defaults(fn=cmd_texture)

    s = sub.add_parser("eval", parents=[common], help="P2S, Chamfer and normal error")
    s.add_argument("--recon", required=True)
    s.add_argument("--data", required=True, help="synth directory (cameras, ground truth)")
    s.add_argument("--gt", help="ground-truth OBJ (default: the synth mesh)")
    s.add_argument("--iou", help="grid_iou.json written by reconstruct")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("ablation", parents=[common], help="rerun the sampling ablation")
    s.set_defaults(fn=cmd_ablation)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("seed", "views", "grid", "preset")
                 if getattr(args, k) is not None}
    try:
        cfg = load_config(args.config, overrides)
        result = args.fn(args, cfg)
    except CliError as exc:
        _fail(exc.kind, str(exc), exc.path)
        return 2 if exc.kind == "config" else 1
    except (NotWatertightError, ValueError, OSError) as exc:
        _fail(type(exc).__name__, str(exc), getattr(exc, "filename", None))
        return 1
    if result is not None:
        print(json.dumps(result, sort_keys=True))
    return 0


def _fail(kind, message, path=None):
    err = {"error": kind, "message": message}
    if path is not None:
        err["path"] = str(path)
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
