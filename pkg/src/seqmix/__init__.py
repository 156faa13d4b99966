"""Sequential multivariate empirical processes under strong mixing."""

__version__ = "0.1.0"
