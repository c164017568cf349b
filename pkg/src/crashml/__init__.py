"""Tree-ensemble crash-rate modelling and lane-width effect analysis."""

__version__ = "0.1.0"
