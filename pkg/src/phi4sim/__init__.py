"""Double-well lattice field simulator and analysis toolkit on 2D/3D tori."""

__version__ = "0.1.0"
