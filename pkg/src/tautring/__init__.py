"""Exact computation of formal tautological quotient rings.

Builds the bigraded algebra on the generators x[i,j] and y, applies the
sl2 operator triple to produce relation spaces, and analyzes the
resulting quotient rings: dimensions, socles, pairings, Gorenstein
verdicts, Fourier symmetry, symmetric powers, and pushforwards to the
unpointed kappa ring.
"""

__version__ = "1.0.0"
