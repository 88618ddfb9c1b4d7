"""Learned pair selection for video-compositing augmentation.

A compact research codebase: a synthetic video benchmark generator, a
mask-based compositing engine, a policy-gradient pair selector and the
two-stage train/retrain experiment pipeline, all on numpy.
"""

__version__ = "0.1.0"
