"""Multispectral algae imaging pipeline: flat-field correction, Otsu segmentation,
fixed-size ROI extraction, synthetic phantoms and a residual CNN classifier."""

__version__ = "0.1.0"
