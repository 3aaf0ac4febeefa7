"""Point-cloud classification with a Chebyshev graph CNN."""

from ._pointgcn import (
    Checkpoint,
    FormatError,
    ParseError,
    __version__,
    farthest_point_sample,
    knn_adjacency,
    normalize_unit_sphere,
    preprocess_off,
    read_off,
    read_packed,
    rescaled_laplacian,
    synth,
    train,
    write_packed,
)

__all__ = [
    "Checkpoint",
    "FormatError",
    "ParseError",
    "farthest_point_sample",
    "knn_adjacency",
    "normalize_unit_sphere",
    "preprocess_off",
    "read_off",
    "read_packed",
    "rescaled_laplacian",
    "synth",
    "train",
    "write_packed",
]
