"""Z-order point serialization, block-sparse attention, and Gaussian-splat prediction.

Submodules are imported explicitly (``import zsplat.morton``, ...) rather than
re-exported here: the CLI entry point must be able to pin BLAS thread counts
before anything pulls in numpy.
"""

__version__ = "0.1.0"
