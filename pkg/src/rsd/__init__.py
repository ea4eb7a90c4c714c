"""Remote state determination with weak measurements and non-product resources."""

__version__ = "0.1.0"
