"""purelab: desk-scale laboratory for diffusion-based adversarial
purification and its robust evaluation."""

__version__ = "0.1.0"
