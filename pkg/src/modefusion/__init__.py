"""Mode-choice data fusion and classifier evaluation toolkit."""

__version__ = "0.1.0"
