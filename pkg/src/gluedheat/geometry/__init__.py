"""Piece meshes, gluing and the path metric of the glued complex."""

from .gluing import GlueMap, GluedComplex, glue
from .meshes import (
    PieceMesh,
    build_disk_piece,
    build_rect_piece,
    build_segment_piece,
    load_mesh_piece,
    mesh_to_text,
    parse_mesh_text,
    simplex_volumes,
)
from .metric import distances_from, glued_distance, metric_ball

__all__ = [
    "PieceMesh",
    "simplex_volumes",
    "build_segment_piece",
    "build_disk_piece",
    "build_rect_piece",
    "load_mesh_piece",
    "parse_mesh_text",
    "mesh_to_text",
    "GlueMap",
    "GluedComplex",
    "glue",
    "glued_distance",
    "distances_from",
    "metric_ball",
]
