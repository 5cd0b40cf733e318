"""Point-prompted amodal segmentation by velocity-guided level set evolution.

A contour is represented implicitly as the zero level set of a dense scalar
field phi (inside-positive, signed-distance-like).  A small convolutional
network predicts a normal-velocity field at each step, and the contour is
evolved for a fixed number of steps with a distance regularizer keeping
|grad phi| close to 1.  The package bundles the numerics, a hand-rolled
reverse-mode tape for training the velocity/initializer networks, a synthetic
occlusion dataset, metrics, a CLI, and an interactive HTTP session service.
"""

__version__ = "0.1.0"
