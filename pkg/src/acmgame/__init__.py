"""Actor-critic-mass learning for two-group mean-field pursuit-evasion games."""

__version__ = "0.1.0"
