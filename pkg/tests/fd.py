"""Fourth-order central differences for PDE residual checks."""
import numpy as np


def d1(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def d2(f, x, h):
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)


def div_flux(u, sigma, x, y, t, h=1e-3):
    """div(sigma grad u) by finite differences (constant sigma)."""
    uxx = d2(lambda s: u(s, y, t), x, h)
    uyy = d2(lambda s: u(x, s, t), y, h)
    uxy = d1(lambda s: d1(lambda r: u(r, s, t), x, h), y, h)
    return sigma[0, 0] * uxx + 2 * sigma[0, 1] * uxy + sigma[1, 1] * uyy


def grad(u, x, y, t, h=1e-3):
    return d1(lambda s: u(s, y, t), x, h), d1(lambda s: u(x, s, t), y, h)
