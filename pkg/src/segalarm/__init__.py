"""segalarm: ground-truth-free quality prediction for volumetric
segmentation masks.

A VAE shape prior is trained on ground-truth masks; the Dice between a mask
and its reconstruction ("fake Dice") is regressed against real Dice to give
a quality estimate for unseen predictions.
"""

__version__ = "0.1.0"
