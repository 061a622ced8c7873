"""Echo-spectroscopy simulations on chaotic testbeds.

Compares the Loschmidt echo M_L with the two-interval echo M_Da
(pi/2 - pi - pi/2 pulse sequence) on the quantized kicked rotator and on
dense Hermitian pairs: short-time decay laws, intermediate exponential
decay, and the long-time perturbation-dependent freeze of M_Da.
"""

from . import classical, echo, experiments, models, numkernel, spectral

__version__ = "0.1.0"

__all__ = [
    "classical",
    "echo",
    "experiments",
    "models",
    "numkernel",
    "spectral",
    "__version__",
]
