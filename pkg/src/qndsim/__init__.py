"""Truncated Fock-space simulator for cubic-QND state engineering.

Quadrature convention throughout: x = (a + a^dag)/2, p = (a - a^dag)/2i,
[x, p] = i/2, vacuum variance 1/4.
"""

__version__ = "0.1.0"
