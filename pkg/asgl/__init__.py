"""Node-level private adversarial embedding of signed graphs."""

__version__ = "0.1.0"
