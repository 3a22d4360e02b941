"""Numerical toolkit for domination of surface group representations into PSL(2, R).

Submodules: ``hyperbolic`` (plane geometry), ``surface`` (representations and
word balls), ``teichmuller`` (Fenchel-Nielsen coordinates, meshes, quadratic
differentials), ``harmonic`` (equivariant harmonic maps), ``lipschitz``
(domination verdicts), ``psi`` (the map between Teichmueller space and
dominating structures), ``io`` and ``cli``.
"""

__version__ = "0.1.0"
