"""Heat kernels, Green functions and fractional Laplacians outside compact obstacles."""

__version__ = "0.1.0"
