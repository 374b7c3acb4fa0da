"""xrnet: a small numpy CNN framework and pipeline for two-class chest X-ray classification."""

__version__ = "0.1.0"
