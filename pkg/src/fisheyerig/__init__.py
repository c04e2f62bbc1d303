"""Multi-fisheye-camera 3D perception toolkit.

Calibration, ego-motion, map-based localization, dense depth from plane
sweeping, height-map fusion and 2D obstacle extraction for a surround
rig of fisheye cameras, verified end-to-end against a synthetic world.
"""

__version__ = "0.1.0"
