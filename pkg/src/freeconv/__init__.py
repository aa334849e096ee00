"""Free additive convolution via subordination, regular-edge analysis, and a
Haar random-matrix laboratory for the matching local-law experiments."""

__version__ = "0.1.0"
