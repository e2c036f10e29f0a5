"""Closed-form reference data used as independent oracles in the tests.

The hyperbolic-paraboloid family admits explicit formulas for the surface,
its frame, spinors, and invariants; everything here was derived by hand
from those formulas and is frozen for comparison against the numerics.
"""
from __future__ import annotations

import numpy as np

SQRT_I = np.exp(1j * np.pi / 4)


def paraboloid_surface(grid, lam=1.0 + 0.0j):
    """Family member of the hyperbolic paraboloid, shape (ny, nx, 3).

    With p = -(i/4) z/lam and p* = (i/4) lam zbar = conj(p) on |lam| = 1:
    f = (-2i(p - p*), -sinh(2(p + p*)), i(p - p*) sinh(2(p + p*))).
    """
    zz = grid.zz
    w = zz / lam
    a = np.real(w)           # -2i(p - p*) = -Re(z/lam)
    b = np.imag(w)           # 2(p + p*)   =  Im(z/lam)
    x1 = -a
    x2 = -np.sinh(b)
    x3 = 0.5 * a * np.sinh(b)
    return np.stack([x1, x2, x3], axis=-1)


def paraboloid_frame(z, lam=1.0 + 0.0j):
    """Closed-form extended frame at the point z, entries (..., 2, 2)."""
    z = np.asarray(z, dtype=complex)
    p = -0.25j * z / lam
    ps = 0.25j * lam * np.conj(z)
    c = np.cosh(p + ps)
    s = np.sinh(p + ps)
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c / SQRT_I
    out[..., 0, 1] = s / SQRT_I
    out[..., 1, 0] = s * SQRT_I
    out[..., 1, 1] = c * SQRT_I
    return out


def paraboloid_spinors(grid):
    """Generating spinors at lam = 1: (cosh(y/2), sinh(y/2))/sqrt(2)."""
    y = grid.ys[:, None] + 0.0 * grid.xs[None, :]
    psi1 = np.cosh(y / 2.0) / np.sqrt(2.0) + 0.0j
    psi2 = np.sinh(y / 2.0) / np.sqrt(2.0) + 0.0j
    return psi1, psi2


def paraboloid_phi(grid):
    """Hand-differentiated Maurer-Cartan components at lam = 1."""
    y = grid.ys[:, None] + 0.0 * grid.xs[None, :]
    phi1 = np.full(grid.shape, -0.5 + 0.0j)
    phi2 = 0.5j * np.cosh(y)
    phi3 = 0.5 * np.sinh(y) + 0.0j
    return np.stack([phi1, phi2, phi3], axis=-1)


def paraboloid_dual_surface(grid, lam=1.0 + 0.0j):
    """Displayed dual family member: second and third coordinates flip sign."""
    f = paraboloid_surface(grid, lam)
    return np.stack([f[..., 0], -f[..., 1], -f[..., 2]], axis=-1)
