"""Single-anchored dense video captioning: corpus tools, evaluation and baselines."""

__version__ = "0.1.0"
