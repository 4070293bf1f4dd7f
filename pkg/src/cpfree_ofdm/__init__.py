"""Link-level simulation of model-based and learned receivers for CP-free OFDM."""

from cpfree_ofdm.numerics import (
    Constellation,
    DftOperator,
    RealLinearSystem,
    dft_matrix,
    make_constellation,
    modulate,
    demodulate,
    posterior_mean,
    real_decompose,
)

__all__ = [
    "Constellation",
    "DftOperator",
    "RealLinearSystem",
    "dft_matrix",
    "make_constellation",
    "modulate",
    "demodulate",
    "posterior_mean",
    "real_decompose",
]

__version__ = "0.1.0"
