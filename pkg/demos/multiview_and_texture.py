"""Two follow-ups to the single-view fit: fusing several views, and color.

1. A torus seen from yaw 0, 120 and 240 degrees. One net is pretrained view by
   view, then either trained further the same way or fine-tuned through the
   fused (averaged embedding) path. Both arms get the same number of steps.
2. A sphere painted red above the equator and blue below. A color field is
   trained on surface points jittered along the normal (d = 1 cm), reusing the frozen
   surface features.

    python3 demos/multiview_and_texture.py
"""
import copy

import numpy as np

from pifield import shapes
from pifield.extract import grid_bounds, texture_vertices
from pifield.metrics import occupancy_iou
from pifield.pipeline import fit_surface, fit_texture, reconstruct
from pifield.scene import make_subject, two_tone
from pifield.train import TrainConfig, finetune_multiview, train_surface

# --- multi-view ---------------------------------------------------------------
torus = shapes.torus(30.0, 12.0, 48, 24, axis="z")
subject = make_subject(torus, yaws=np.radians([0.0, 120.0, 240.0]), image_size=(128, 128))
cfg = TrainConfig.surface(epochs=150, points_per_object=3000)
ex, net, _ = fit_surface([subject], cfg)

single = (copy.deepcopy(ex), copy.deepcopy(net))
fused = (copy.deepcopy(ex), copy.deepcopy(net))
train_surface([subject], *single, TrainConfig.surface(
    epochs=30, points_per_object=3000, learning_rate=cfg.finetune_lr, lr_decay_factor=1.0, seed=1))
finetune_multiview(fused[1], fused[0], [subject],
                   TrainConfig.surface(epochs=90, points_per_object=3000, seed=1))

b = grid_bounds(torus.bounds())
for label, (e, n), views in (("1 view ", single, subject.views[:1]),
                             ("3 views", fused, subject.views)):
    _, grid = reconstruct(n, e, views, b, 48)
    print(f"torus IoU, {label}: {occupancy_iou(grid, subject.oracle, b, 48):.4f}")

# --- texture ------------------------------------------------------------------
ball = two_tone(shapes.icosphere(4, 30.0))
subject = make_subject(ball, n_views=1, image_size=(128, 128))
ex_v, _, _ = fit_surface([subject], TrainConfig.surface(epochs=30, points_per_object=3000))
ex_c, net_c, rep = fit_texture([subject], ex_v, TrainConfig.texture(epochs=60, points_per_object=4000))
colored = texture_vertices(ball, net_c, ex_c, ex_v, subject.views)
err = np.linalg.norm(colored.vertex_colors - ball.vertex_colors, axis=1)
print(f"texture: mean per-vertex RGB error {err.mean():.4f}, worst {err.max():.4f}")
