"""Quadrature rules on the reference triangle and the unit interval."""
import numpy as np

# Symmetric 6-point rule, exact for polynomials of degree 4.  Weights are
# normalised to sum to one (multiply by the triangle area).
_A, _WA = 0.445948490915965, 0.223381589678011
_B, _WB = 0.091576213509771, 0.109951743655322

TRI_POINTS = np.array([
    [_A, _A], [1 - 2 * _A, _A], [_A, 1 - 2 * _A],
    [_B, _B], [1 - 2 * _B, _B], [_B, 1 - 2 * _B],
])
TRI_WEIGHTS = np.array([_WA, _WA, _WA, _WB, _WB, _WB])

TRI_DEGREE = 4


def triangle_rule():
    return TRI_POINTS, TRI_WEIGHTS


def line_rule(n=3):
    """Gauss-Legendre on ``[0, 1]`` with weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
