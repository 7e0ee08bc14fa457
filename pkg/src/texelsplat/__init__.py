"""Perspective-stable pixel art by splatting cubemap texels as world-space quads."""

from .camera import CameraPose
from .cubemap import CubemapGBuffer, FaceId, capture, dir_from_texel, texel_from_dir
from .harness import RunConfig, naive_render, render_sequence, resolve_asset, stability_metrics
from .imageio import read_ppm, write_image, write_ppm
from .paths import CameraPath, load_path
from .probes import ProbeParams, ProbeSet, bayer4, select_grid_layer, snap_origin, step
from .scene import Ray, Scene, intersect, load_scene, occluded, parse_scene
from .shading import ShadedCubemap, ShadingParams, detect_edges, linear_to_oklab, oklab_to_linear, posterize_lightness, shade_cubemap
from .splatter import Framebuffer, Layer, SplatParams, edge_expansion, make_quad, rasterize_quad, reconstruct, render_frame, visible

__version__ = "0.1.0"

__all__ = [
    "CameraPath", "CameraPose", "CubemapGBuffer", "FaceId", "Framebuffer", "Layer", "ProbeParams", "ProbeSet",
    "Ray", "RunConfig", "Scene", "ShadedCubemap", "ShadingParams", "SplatParams", "bayer4", "capture",
    "detect_edges", "dir_from_texel", "edge_expansion", "intersect", "linear_to_oklab", "load_path", "load_scene",
    "make_quad", "naive_render", "occluded", "oklab_to_linear", "parse_scene", "posterize_lightness",
    "rasterize_quad", "read_ppm", "reconstruct", "render_frame", "render_sequence", "resolve_asset", "select_grid_layer",
    "shade_cubemap", "snap_origin", "stability_metrics", "step", "texel_from_dir", "visible", "write_image",
    "write_ppm",
]
