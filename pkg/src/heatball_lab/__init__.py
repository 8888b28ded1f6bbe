"""Heat-ball mean value computations on model spacetimes."""

__version__ = "0.1.0"
