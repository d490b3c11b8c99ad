"""Planning toolkit for slice-selective adiabatic inversion pulses.

Simulates adiabatic pulses with the Bloch equations, finds the minimum B1
amplitude for adiabaticity, and turns volumetric B1 maps into per-slice
pulse-power scale factors plus a SAR reduction index.
"""

__version__ = "0.1.0"
