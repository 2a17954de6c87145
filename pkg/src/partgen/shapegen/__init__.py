from .latent import GAUSS_WIDTH, ImplicitCode, decode_parts, encode_parts, latent_from_parts
from .field import (
    GRID_HI,
    GRID_LO,
    SHARPNESS,
    Mesh,
    OccupancyGrid,
    bounding_radius,
    marching_cubes,
    occupancy,
    occupancy_many,
    part_log_scores,
    part_quadratics,
    sample_grid,
)
from .invert import InvertResult, invert_occupancy, refine_loss_and_grads
from .io import export_obj, import_obj, load_latent_record, obj_text, save_latent_record
from .procedural import CATEGORIES, ShapeSpec, make_dataset, make_shape

__all__ = [
    "GAUSS_WIDTH",
    "ImplicitCode",
    "decode_parts",
    "encode_parts",
    "latent_from_parts",
    "Mesh",
    "OccupancyGrid",
    "occupancy",
    "occupancy_many",
    "part_quadratics",
    "part_log_scores",
    "sample_grid",
    "marching_cubes",
    "bounding_radius",
    "SHARPNESS",
    "GRID_LO",
    "GRID_HI",
    "InvertResult",
    "invert_occupancy",
    "refine_loss_and_grads",
    "export_obj",
    "import_obj",
    "obj_text",
    "save_latent_record",
    "load_latent_record",
    "ShapeSpec",
    "make_dataset",
    "make_shape",
    "CATEGORIES",
]
