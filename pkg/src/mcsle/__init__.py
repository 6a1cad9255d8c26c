"""Lattice constructions and numerical checks for chordal SLE in multiply
connected domains: discrete harmonic kernels and their operator identities,
Dirichlet-energy signature weights, GFF level-line mixtures, the crossing
annulus winding law, random-walk loop soups and boundary-excursion hulls,
and the restriction-property verification harnesses."""

__version__ = "0.1.0"
