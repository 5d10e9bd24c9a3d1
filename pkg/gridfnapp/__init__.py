"""gridfn: calculus on finite grids, read through ladders of grid sizes."""

__version__ = "0.1.0"
