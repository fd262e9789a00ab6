"""Curation and evaluation toolkit for lymphocyte detection datasets.

Turns COCO-annotated histology ROI patches into detector-ready 256x256
training images (tiling large patches, upsampling small ones), refines
detector predictions, and scores them with an FROC metric.
"""

__version__ = "0.1.0"

from tilkit.types import AnnotatedPatch, BBox, Detection, PixelPatch

__all__ = ["AnnotatedPatch", "BBox", "Detection", "PixelPatch", "__version__"]
