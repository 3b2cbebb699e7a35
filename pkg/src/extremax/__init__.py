"""Distributed computation of the max and argmax of users' observations.

Modules: sources, distortion, lossless, quantizer, rdf, interactive, harness.
"""

__version__ = "0.1.0"
