"""Phaseless inverse scattering in three dimensions.

Intensity-only multi-frequency data on a plane above the medium are turned
into complex scattered fields, moved closer to the domain by angular-spectrum
propagation and then inverted for the dielectric coefficient by a cascade
over decreasing wavenumbers.
"""

__version__ = "0.1.0"
