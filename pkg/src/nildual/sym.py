"""The two-sided surface formula: both minimal surfaces from one extended
frame, spinor extraction from the dual sheet, and rigid-motion-insensitive
comparison of sampled immersions.

With N_m = (i/2) F sigma3 F^{-1} and m_pm = -i lam F_lam F^{-1} +- N_m,
the two surfaces are  Xi_nil(m_pm^o - (i/2) lam (d_lam m_pm)^d), where
"o"/"d" take the off-diagonal/diagonal part.  Everything is assembled
algebraically from (F, F_lam, F_lam2); no quadrature in lam or z.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loops import SIGMA3
from .nil3 import (
    PhiField,
    SurfaceGrid,
    left_maurer_cartan,
    stencil_valid,
    xi_nil_with_residual,
)
from .spinors import spinors_from_phi


@dataclass
class SymOutput:
    """Both surfaces of one frame at one parameter value."""

    f_minus: SurfaceGrid
    f_plus: SurfaceGrid
    n_m: np.ndarray            # (ny, nx, 2, 2)
    lam: complex
    grid: object
    reality_residual: float    # worst su(1,1)-reality defect of the output

    def valid(self):
        return self.f_minus.valid() & self.f_plus.valid()


def sym_maps(frame, mask=None, reality_tol=1e-6, source=""):
    """Evaluate both surfaces from a FrameField carrying (F, F_lam, F_lam2).

    Raises if the assembled matrices leave the real span of the su(1,1)
    basis beyond `reality_tol` (a frame defect); the residual is reported
    on the output either way.
    """
    F, F1, F2 = frame.F, frame.F_lam, frame.F_lam2
    lam = complex(frame.lam)
    grid = frame.grid
    if mask is not None and not np.all(mask):
        F = np.where(mask[..., None, None], F, np.eye(2, dtype=complex))
        F1 = np.where(mask[..., None, None], F1, 0.0)
        F2 = np.where(mask[..., None, None], F2, 0.0)
    Finv = np.linalg.inv(F)

    A = F1 @ Finv                      # (d_lam F) F^{-1}
    N = 0.5j * (F @ SIGMA3 @ Finv)
    # d_lam of A and N by the product rule; d_lam(F^{-1}) = -F^{-1} F1 F^{-1}
    dA = F2 @ Finv - A @ A
    dN = 0.5j * (F1 @ SIGMA3 @ Finv) - N @ A

    base = -1j * lam * A
    dbase = -1j * A - 1j * lam * dA

    out = {}
    live = np.ones(grid.shape, dtype=bool) if mask is None else mask
    for sgn in (+1, -1):
        m = base + sgn * N
        dm = dbase + sgn * dN
        hat = _off_diag(m) - 0.5j * lam * _diag(dm)
        coords, residual = xi_nil_with_residual(hat)
        out[sgn] = (coords, residual)

    worst = max(float(np.max(out[+1][1][live], initial=0.0)),
                float(np.max(out[-1][1][live], initial=0.0)))
    if worst > reality_tol:
        raise ValueError(
            f"surface matrices leave su(1,1) by {worst:.3e} (frame defect)")

    f_minus = SurfaceGrid(out[-1][0], grid, lam=lam, mask=mask,
                          source=source or "sym:minus")
    f_plus = SurfaceGrid(out[+1][0], grid, lam=lam, mask=mask,
                         source=source or "sym:plus")
    return SymOutput(f_minus=f_minus, f_plus=f_plus, n_m=N, lam=lam,
                     grid=grid, reality_residual=worst)


def _diag(M):
    out = np.zeros_like(M)
    out[..., 0, 0] = M[..., 0, 0]
    out[..., 1, 1] = M[..., 1, 1]
    return out


def _off_diag(M):
    out = np.zeros_like(M)
    out[..., 0, 1] = M[..., 0, 1]
    out[..., 1, 0] = M[..., 1, 0]
    return out


def extract_dual_spinors(sym, on_branch_cut="raise"):
    """Spinors of the plus-sheet surface at its parameter value.

    The frame components of the plus sheet carry a 1/lam weight relative
    to the spinor quadrics, so the extracted components are rescaled by
    lam before inversion.
    """
    f_plus = sym.f_plus
    phi = left_maurer_cartan(f_plus)
    rescaled = PhiField(phi.phi * complex(sym.lam), phi.grid)
    mask = None
    if f_plus.mask is not None:
        mask = stencil_valid(f_plus.mask)
    return spinors_from_phi(rescaled, lam=sym.lam, mask=mask,
                            on_branch_cut=on_branch_cut)


def gauss_from_normal_field(n_m):
    """Disk-model value of the timelike field N_m.

    Coordinates of N_m in the su(1,1) basis satisfy x3^2 - x1^2 - x2^2 = 1
    on the lower sheet; stereographic projection from (0, 0, 1) gives
    w = i * g, so dividing by i recovers the normal Gauss map.
    """
    coords, _ = xi_nil_with_residual(n_m)
    w = (coords[..., 0] + 1j * coords[..., 1]) / (1.0 - coords[..., 2])
    return -1j * w


@dataclass
class MotionFit:
    """Result of the rigid-motion comparison of two sampled immersions."""

    equivalent: bool
    kind: str          # "rotation" | "reflection" | "reflection-conj" | "none"
    theta: float
    residual: float


def _phi_pack(surface):
    phi = left_maurer_cartan(surface).phi
    return phi


_REFLECTIONS = {
    "rotation": lambda p: p,
    # d(rho) for rho(x) = (x1, -x2, -x3), same parametrization
    "reflection": lambda p: np.stack(
        [p[..., 0], -p[..., 1], -p[..., 2]], axis=-1),
    # conjugated variant: relates the two square-root branch conventions
    "reflection-conj": lambda p: np.stack(
        [np.conj(p[..., 0]), -np.conj(p[..., 1]), -np.conj(p[..., 2])],
        axis=-1),
}


def _reversed_phi(p):
    """Frame components of z -> f(-z): the chain rule gives -phi(-z).

    Valid on grids symmetric under z -> -z (checked by the caller)."""
    return -p[::-1, ::-1]


def mc_equivalent(f, g, allow_reflection=False, tol=1e-6, base_index=None):
    """Decide whether g = (left translation) . (rotation about e3) . f,
    optionally composed with a reflection, and - for centred grids - with
    the orientation-preserving reversal z -> -z of the parametrization
    (equivariant examples trade the two sheets across it).

    The rotation angle is fitted at one node from phi1 + i phi2 and then
    verified globally; no averaging, so failures are sharp.  Returns the
    best MotionFit over the allowed candidates.
    """
    if f.grid != g.grid:
        raise ValueError("surfaces must share a grid")
    grid = f.grid
    valid = f.valid() & g.valid()
    sv = stencil_valid(valid)
    pf = _phi_pack(f)
    pg = _phi_pack(g)
    kinds = ["rotation"]
    if allow_reflection:
        kinds += ["reflection", "reflection-conj"]
    centred = (abs(grid.x0 + grid.x1) < 1e-12 * (abs(grid.x0) + 1)
               and abs(grid.y0 + grid.y1) < 1e-12 * (abs(grid.y0) + 1))
    variants = [("", pf)]
    if centred:
        rev_valid = sv & sv[::-1, ::-1]
        variants.append(("-rev", _reversed_phi(pf)))
    else:
        rev_valid = sv

    best = MotionFit(False, "none", 0.0, np.inf)
    wg = pg[..., 0] + 1j * pg[..., 1]
    scale = max(float(np.max(np.abs(pf[sv]))), 1e-30)
    for vname, base in variants:
        live = sv if vname == "" else rev_valid
        for kind in kinds:
            pr = _REFLECTIONS[kind](base)
            wf = pr[..., 0] + 1j * pr[..., 1]
            anchors = np.abs(wf) * live
            if base_index is not None and anchors[base_index] > tol * scale:
                ai, aj = base_index
            else:
                ai, aj = np.unravel_index(np.argmax(anchors), anchors.shape)
            if anchors[ai, aj] <= tol * scale:
                continue
            phase = wg[ai, aj] / wf[ai, aj]
            phase /= abs(phase)
            res = np.maximum(np.abs(wg - phase * wf),
                             np.abs(pg[..., 2] - pr[..., 2]))
            r = float(np.max(res[live], initial=0.0)) / scale
            if r < best.residual:
                best = MotionFit(r <= tol, kind + vname,
                                 float(np.angle(phase)), r)
    return best
