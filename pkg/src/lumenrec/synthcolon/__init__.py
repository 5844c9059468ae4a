from .shapes import ColonSpec, ColonGeometry, build_geometry, colon_sdf, random_colon, straight_colon
from .render import RenderConfig, TextureStyle, render_frame, sample_trajectory, STYLE_A, STYLE_B
from .dataset import generate_dataset, bake_surface_mesh, test_set_manifests

__all__ = [
    "ColonSpec",
    "ColonGeometry",
    "build_geometry",
    "colon_sdf",
    "random_colon",
    "straight_colon",
    "RenderConfig",
    "TextureStyle",
    "render_frame",
    "sample_trajectory",
    "STYLE_A",
    "STYLE_B",
    "generate_dataset",
    "bake_surface_mesh",
    "test_set_manifests",
]
