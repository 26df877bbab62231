"""RGB-D single-object tracking: depth-gated background masking around a color
matcher, plus a small color/depth network that tightens the matched box."""

__version__ = "0.1.0"
