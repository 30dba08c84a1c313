"""Shared test machinery: end-to-end finite-difference checks and small scenes."""
import numpy as np

from pifield.camera import WeakPerspectiveCamera
from pifield.featext import FeatureImage, PyramidExtractor
from pifield.field import FieldNet, MlpSpec
from pifield.scene import View
from pifield.train import SurfaceTask, TextureTask, batch_loss_and_grads


def random_views(n, size=24, seed=0):
    rng = np.random.default_rng(seed)
    views = []
    for k in range(n):
        cam = WeakPerspectiveCamera(yaw=2 * np.pi * k / max(n, 1), scale=8.0,
                                    principal=((size - 1) / 2,) * 2, image_size=(size, size),
                                    depth_half_range=1.5)
        # smooth images keep bilinear sampling away from kinks that upset differences
        j, i = np.mgrid[0:size, 0:size] / size
        img = np.stack([np.sin(3 * i + c + k) * np.cos(2 * j - c) for c in range(3)]) * 0.5 + 0.5
        views.append(View(cam, FeatureImage(img + 0.01 * rng.random(img.shape))))
    return views


def end_to_end_gradcheck(kind="surface", n_views=1, n_points=10, seed=0, h=1e-6):
    """Worst relative error between analytic and central-difference gradients
    of the batch loss over every MLP and projection parameter."""
    rng = np.random.default_rng(seed)
    ex = PyramidExtractor(2, projection_dim=3, seed=seed)
    views = random_views(n_views, seed=seed)
    points = rng.uniform(-0.8, 0.8, (n_points, 3))
    if kind == "surface":
        task = SurfaceTask(ex)
        spec = MlpSpec(4, (5, 4, 3), 1, "sigmoid", embed_layer=1)
        labels = (rng.random(n_points) > 0.5).astype(float)
    else:
        frozen = PyramidExtractor(2, projection_dim=2, seed=seed + 1)
        task = TextureTask(ex, frozen)
        spec = MlpSpec(6, (5, 4, 3), 3, "tanh01", embed_layer=1)
        labels = rng.random((n_points, 3))
    net = FieldNet(spec, seed=seed)
    fused = n_views > 1
    _, grads = batch_loss_and_grads(task, net, views, points, labels, fused)
    params = net.params + ex.params
    worst = 0.0
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = batch_loss_and_grads(task, net, views, points, labels, fused)
            p[idx] = old - h
            dn, _ = batch_loss_and_grads(task, net, views, points, labels, fused)
            p[idx] = old
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(1e-4, abs(fd), abs(g[idx])))
    return worst, len(grads) == len(params)
