"""Patch-based 3D U-Net that predicts B1 maps from localizer-like volumes.

Trains on synthetic subjects (multi-compartment phantoms whose localizer
intensity implicitly encodes the B1 pattern through the flip-angle signal
response) and exports predictions in the shared volume format.
"""

__version__ = "0.1.0"
