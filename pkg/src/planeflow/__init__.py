"""Optical flow and occlusion estimation by multi-scale robust plane matching.

A noisy nearest-neighbor correspondence field is refined into reliable flow
by detecting per-window homography plane models with RANSAC, validating them
photometrically, and merging across window scales; pixels that conform to no
plane model localize occlusion, and the remaining gaps are filled by model
propagation plus edge-aware interpolation.
"""

__version__ = "0.1.0"
