"""Parametric 3D head model with pixel-aligned condition rendering, texture
stealing, and a deterministic dataset pipeline."""

from .assets import (
    HeadModelAssets,
    gen_synthetic_assets,
    load_assets,
    save_assets,
    validate_assets,
)
from .camera import CameraParams, ImageSpec, camera_from_eyes, project
from .errors import AssetFormatError, ProfileViewError, ValidationError
from .headmodel import HeadParams, Mesh, evaluate, rodrigues, vertex_normals
from .pipeline import (
    DatasetManifest,
    FaceParams,
    interpolate_params,
    lighting_bank,
    load_manifest,
    make_dataset,
    sample_params,
    validate_manifest,
)
from .raster import (
    ConditioningStack,
    RenderBuffers,
    conditioning_stack,
    load_stack,
    mask_from_stack,
    rasterize,
    render_condition,
    render_normals,
    render_textured,
    save_stack,
)
from .shading import (
    AppearanceParams,
    LightingParams,
    TextureMap,
    albedo_from_appearance,
    sh_basis,
    shade,
    shade_unclamped,
)
from .texsteal import (
    CorrespondenceMap,
    PartialTexture,
    consistency_loss,
    load_correspondences,
    load_partial_texture,
    save_correspondences,
    save_partial_texture,
    steal_texture,
    texel_correspondences,
)

__version__ = "0.1.0"
