"""Group-wise deep whitening-and-coloring for unpaired image translation.

Thin numpy front end over the C++ core. Arrays are float64; image batches
are [B, 3, H, W] in [-1, 1]; feature matrices are [C, N].
"""

from ._core import (
    ArgumentError,
    ConfigError,
    ConvergenceError,
    DegenerateSampleError,
    FormatError,
    IoError,
    NonFiniteError,
    ShapeError,
    benchmark_transform,
    build_coloring,
    color_classical,
    coloring_regularizer,
    covariance,
    eig_symmetric,
    gdwct_forward,
    gradient_check,
    style_representation_size,
    synth_dataset,
    train,
    translate,
    whiten_classical,
    whitening_regularizer,
)

__version__ = "0.1.0"
