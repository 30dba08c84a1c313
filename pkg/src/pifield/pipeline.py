"""End-to-end helpers shared by the command line and the demos: fitting,
reconstruction, checkpoints and the sampling ablation."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import shapes
from .extract import evaluate_grid, grid_bounds, marching_cubes
from .featext import PyramidExtractor
from .field import FieldNet, surface_spec, texture_spec
from .metrics import chamfer, occupancy_iou, p2s
from .sampler import ABLATION_SCHEMES, SamplingConfig
from .scene import make_subject
from .tensorio import read_tensor, write_tensor
from .train import TrainConfig, train_surface, train_texture

log = logging.getLogger(__name__)

DEFAULT_PROJECTION = 16


def make_extractor(levels=4, projection_dim=DEFAULT_PROJECTION, seed=0):
    return PyramidExtractor(levels, 3, projection_dim, seed=seed)


def fit_surface(subjects, cfg, sampling=None, preset="desk", levels=4,
                projection_dim=DEFAULT_PROJECTION, embed_layer=3):
    """Fresh extractor + surface net trained on ``subjects``."""
    ex = make_extractor(levels, projection_dim, seed=cfg.seed)
    net = FieldNet(surface_spec(ex.feature_dim, preset, embed_layer), seed=cfg.seed)
    report = train_surface(subjects, ex, net, cfg, sampling)
    return ex, net, report


def fit_texture(subjects, surface_extractor, cfg, sampling=None, preset="desk", levels=4,
                projection_dim=DEFAULT_PROJECTION, embed_layer=3):
    ex = make_extractor(levels, projection_dim, seed=cfg.seed + 1)
    net = FieldNet(texture_spec(ex.feature_dim, surface_extractor.feature_dim, preset,
                                embed_layer), seed=cfg.seed + 1)
    report = train_texture(subjects, ex, surface_extractor, net, cfg, sampling)
    return ex, net, report


def reconstruct(net, extractor, views, bounds, resolution=64, iso=0.5):
    grid = evaluate_grid(net, extractor, views, bounds, resolution)
    return marching_cubes(grid, iso), grid


# --- checkpoints ------------------------------------------------------------------

def save_checkpoint(directory, net, extractor, cfg=None, epoch=None, name="surface"):
    """``<name>.pift`` (flat MLP parameters), ``<name>_proj.pift`` and ``<name>.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(d / f"{name}.pift", net.flat_params())
    meta = {"net": net.header(),
            "extractor": {"levels": extractor.levels, "base_channels": extractor.base_channels,
                          "projection_dim": None if extractor.projection is None
                          else int(extractor.projection.shape[0])},
            "train": None if cfg is None else cfg.to_dict(), "epoch": epoch}
    if extractor.projection is not None:
        write_tensor(d / f"{name}_proj.pift",
                     np.concatenate([extractor.projection.ravel(), extractor.bias]))
    (d / f"{name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory, name="surface"):
    d = Path(directory)
    meta_path = d / f"{name}.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing checkpoint metadata {meta_path}")
    meta = json.loads(meta_path.read_text())
    net = FieldNet.from_header(meta["net"], read_tensor(d / f"{name}.pift"))
    e = meta["extractor"]
    ex = PyramidExtractor(e["levels"], e["base_channels"], e["projection_dim"])
    if e["projection_dim"] is not None:
        flat = read_tensor(d / f"{name}_proj.pift")
        k, r = ex.projection.shape
        if flat.size != k * r + k:
            raise ValueError(f"{d / f'{name}_proj.pift'}: wrong projection size")
        ex.projection = flat[:k * r].reshape(k, r).copy()
        ex.bias = flat[k * r:].copy()
    return net, ex, meta


# --- sampling ablation ------------------------------------------------------------

def ablation_fixtures():
    """Body-scale shapes (cm) so the sampling widths mean what they do on people."""
    return {
        "sphere": shapes.icosphere(4, 30.0),
        "torus": shapes.torus(30.0, 12.0, 48, 24, axis="z"),
        "capsule": shapes.capsule(15.0, 25.0, axis="y"),
    }


def run_ablation(fixtures=None, cfg=None, schemes=None, n_views=1, image_size=(128, 128),
                 resolution=48, chamfer_samples=2000, seed=0):
    """Train one surface model per (sampling scheme, shape) with matched budgets and seeds.

    Every shape gets its own model so that the comparison isolates the sampling
    scheme rather than the capacity of a small net shared across shapes. Rows
    ``{"scheme", "iou", "p2s_cm", "chamfer_cm", ...}`` hold suite means, evaluated
    from the yaw-0 view, in scheme order.
    """
    fixtures = ablation_fixtures() if fixtures is None else fixtures
    cfg = cfg or TrainConfig.surface(epochs=150, points_per_object=3000, seed=seed)
    schemes = list(ABLATION_SCHEMES) if schemes is None else schemes
    subjects = {k: make_subject(m, n_views, image_size) for k, m in fixtures.items()}
    rows = []
    for name in schemes:
        sampling = SamplingConfig(n_points=cfg.points_per_object, seed=cfg.seed,
                                  **ABLATION_SCHEMES[name])
        ious, p2ss, chs, sums = {}, [], [], []
        for shape, subj in subjects.items():
            ex, net, report = fit_surface([subj], cfg, sampling)
            b = grid_bounds(subj.mesh.bounds())
            rec, grid = reconstruct(net, ex, subj.views[:1], b, resolution)
            ious[shape] = float(occupancy_iou(grid, subj.oracle, b, resolution))
            if rec.is_empty:
                p2ss.append(float("inf"))
                chs.append(float("inf"))
            else:
                p2ss.append(p2s(rec, subj.mesh))
                chs.append(chamfer(rec, subj.mesh, chamfer_samples, seed))
            sums.append(report.checksum)
        rows.append({"scheme": name, "iou": float(np.mean(list(ious.values()))),
                     "p2s_cm": float(np.mean(p2ss)), "chamfer_cm": float(np.mean(chs)),
                     "per_shape_iou": ious, "checksums": sums})
        log.info("ablation %s iou %.4f", name, rows[-1]["iou"])
    return rows


def ablation_table(rows):
    lines = [f"{'scheme':<18}{'iou':>10}{'p2s_cm':>12}{'chamfer_cm':>12}"]
    for r in rows:
        lines.append(f"{r['scheme']:<18}{r['iou']:>10.4f}{r['p2s_cm']:>12.4f}{r['chamfer_cm']:>12.4f}")
    return "\n".join(lines)
