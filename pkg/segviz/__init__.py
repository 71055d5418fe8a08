"""SegViz: federated multi-task segmentation on synthetic phantoms."""

__version__ = "0.1.0"
