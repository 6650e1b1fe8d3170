"""Hyperspectral + RGB fusion segmentation with coordinate and state-space attention."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    IoError,
    LabelError,
    Network,
    NumericalError,
    ShapeError,
    combined_loss,
    cross_entropy_loss,
    dice_loss,
    evaluate,
    fit_pca,
    fuse,
    gradcheck,
    jacobi_eigen,
    project_hyper3,
    read_cube,
    read_pgm,
    read_ppm,
    ssm_scan,
    synthetic_dataset,
    write_cube,
    write_pgm,
    write_ppm,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "IoError",
    "LabelError",
    "Network",
    "NumericalError",
    "ShapeError",
    "combined_loss",
    "cross_entropy_loss",
    "dice_loss",
    "evaluate",
    "fit_pca",
    "fuse",
    "gradcheck",
    "jacobi_eigen",
    "project_hyper3",
    "read_cube",
    "read_pgm",
    "read_ppm",
    "ssm_scan",
    "synthetic_dataset",
    "write_cube",
    "write_pgm",
    "write_ppm",
]
