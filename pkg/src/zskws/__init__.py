"""Zero-shot keyword spotting with multi-granularity contrastive training."""

__version__ = "0.1.0"
