"""Cross-modal speaker/text contrastive linking and retrieval engine."""

__version__ = "0.1.0"
