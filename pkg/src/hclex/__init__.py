"""Human-capital disclosure lexicon: build, validate and score."""

__version__ = "0.1.0"
