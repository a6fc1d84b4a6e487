"""Unsupervised camouflaged object detection: fixed-strategy pseudo-labels, a
teacher-student dual-branch decoder with adaptive pseudo-label mixing,
Look-Twice small-object refinement and the standard COD metrics."""

__version__ = "0.1.0"
