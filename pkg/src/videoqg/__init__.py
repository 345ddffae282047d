"""Video question generation: cross-modal self-attention models, metrics and tooling."""

__version__ = "0.1.0"
