"""Toeplitz neural network: O(n log n) token mixing with relative-position
generated Toeplitz matrices, a small numpy training engine, and equivalence
maps to convolution, state spaces, and linear-bias attention."""

__version__ = "0.1.0"

from tnn._backend import backend_name

__all__ = ["__version__", "backend_name"]
