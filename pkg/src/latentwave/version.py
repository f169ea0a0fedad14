"""Version tags baked into artifacts for provenance checks."""

__version__ = "0.1.0"
DATA_VERSION = "lw-data-1"
CHECKPOINT_VERSION = "lw-ckpt-1"
