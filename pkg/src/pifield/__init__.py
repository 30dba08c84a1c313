"""Pixel-aligned implicit fields at desk scale.

Watertight meshes are rendered under a weak-perspective yaw sweep, sampled for
occupancy and color, and used to train small MLP fields on pixel-aligned pyramid
features. Iso-surfaces come out through marching cubes and are scored with
point-to-surface, Chamfer and normal-map errors.
"""
from .camera import WeakPerspectiveCamera, fit_camera, project, yaw_sweep
from .extract import ScalarGrid, evaluate_grid, marching_cubes, texture_vertices
from .featext import FeatureImage, PyramidExtractor, bilinear_sample, build_pyramid, extract
from .field import FieldNet, MlpSpec, embed, forward, fuse_forward, surface_spec, texture_spec
from .mesh import Aabb, Bvh, TriMesh, closest_point, load_obj, sample_surface, save_obj
from .metrics import EvalReport, chamfer, normal_reprojection, occupancy_iou, p2s
from .occupancy import OccupancyOracle, inside, is_watertight, winding_number
from .render import RenderOutput, rasterize
from .sampler import SampleBatch, SamplingConfig, sample_occupancy, sample_texture
from .train import (TrainConfig, TrainReport, finetune_multiview, loss_surface, loss_texture,
                    step_adam, step_rmsprop, train_surface, train_texture)

__version__ = "0.1.0"
