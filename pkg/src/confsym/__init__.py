"""Rank-one conformally symmetric metrics built from centroaffine surfaces.

Modules
-------
jets, quadrature, tensors
    Truncated Taylor arithmetic and tensor calculus on jets.
surface, centroaffine, kerb, tau
    Surface connections, centroaffine geometry, Ker 𝓑 and the τ solver.
metrics, curvature
    Metric construction and curvature certification.
fixtures, pipeline, cli
    Test surfaces, configured runs and the ``confsym`` command.
"""

__version__ = "0.1.0"
