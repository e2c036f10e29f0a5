"""Holomorphic-potential pipeline: integrate dPhi = Phi xi dz in the loop
algebra, split Phi = F B+ pointwise in the SU(1,1) loop group, and hand
the frame (with exact parameter derivatives) to the surface formulas.

The splitting method: on the circle  Z := sigma3 Phi^dag sigma3 Phi equals
(sigma3 B+^dag sigma3) B+, a minus-loop times a plus-loop.  A block-Toeplitz
linear system on the Fourier coefficients yields W = Z_-^{-1} normalized to
the identity at infinity; then Z+ = W Z is C B+ for a constant matrix C
fixed by requiring B+(0) upper-triangular with positive real diagonal.
Finally F = Phi B+^{-1}.  Nodes where the system degenerates are big-cell
failures and are masked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .frames import FrameField
from .loops import SIGMA3, SQRT_I, MatrixLoop, plus_loop_inverse
from .nil3 import DomainGrid
from .sym import sym_maps

# left gauge applied to pipeline frames: a fixed rotation about e3 that
# aligns the factorized frame with the spinor normal form
SPINOR_GAUGE = np.array([[1.0 / SQRT_I, 0.0], [0.0, SQRT_I]], dtype=complex)

DEFAULT_ORDER = 12
COND_CAP = 1e12


@dataclass
class HoloPotential:
    """xi = sum_j xi_j(z) lam^j dz with polynomial entries, j >= -1.

    terms[j] is an array (deg+1, 2, 2): coefficient of z^k at index k.
    """

    terms: dict
    twisted: bool = True

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("potential has no terms")
        self.terms = {int(j): np.asarray(c, dtype=complex)
                      for j, c in self.terms.items()}
        if min(self.terms) != -1:
            raise ConfigError("lowest spectral power must be -1")
        for j, c in self.terms.items():
            if c.ndim != 3 or c.shape[1:] != (2, 2):
                raise ConfigError("term entries must be (deg+1, 2, 2)")
        if self.twisted:
            for j, c in self.terms.items():
                diag = max(np.max(np.abs(c[:, 0, 0])), np.max(np.abs(c[:, 1, 1])))
                off = max(np.max(np.abs(c[:, 0, 1])), np.max(np.abs(c[:, 1, 0])))
                bad = off if j % 2 == 0 else diag
                if bad != 0.0:
                    raise ConfigError(
                        f"twisted potential has forbidden mass at power {j}")

    @property
    def powers(self):
        return sorted(self.terms)

    def eval(self, z):
        """Coefficient matrices at the point z, keyed by spectral power."""
        out = {}
        for j, c in self.terms.items():
            acc = np.zeros((2, 2), dtype=complex)
            for k in range(c.shape[0] - 1, -1, -1):
                acc = acc * z + c[k]
            out[j] = acc
        return out

    def eval_grid(self, zz, power):
        """One coefficient matrix evaluated on a complex grid."""
        c = self.terms[power]
        acc = np.zeros(zz.shape + (2, 2), dtype=complex)
        for k in range(c.shape[0] - 1, -1, -1):
            acc = acc * zz[..., None, None] + c[k]
        return acc

    def to_json(self):
        terms = []
        for j in self.powers:
            c = self.terms[j]
            entries = []
            for r in range(2):
                for s in range(2):
                    entries.append([[float(v.real), float(v.imag)]
                                    for v in c[:, r, s]])
            terms.append({"power": j, "entries": entries})
        return {"schema": 1, "twisted": self.twisted, "terms": terms}

    @classmethod
    def from_json(cls, data):
        terms = {}
        for item in data["terms"]:
            j = int(item["power"])
            entries = item["entries"]
            deg = max(len(e) for e in entries)
            c = np.zeros((deg, 2, 2), dtype=complex)
            for idx, coeffs in enumerate(entries):
                for k, (re, im) in enumerate(coeffs):
                    c[k, idx // 2, idx % 2] = re + 1j * im
            terms[j] = c
        return cls(terms, twisted=bool(data.get("twisted", False)))


def _const_term(M):
    return np.asarray(M, dtype=complex)[None, :, :]


def paraboloid_potential():
    """Off-diagonal constant at the lowest power; the standard saddle seed."""
    X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    return HoloPotential({-1: _const_term(-0.25j * X)})


def helicoid_potential(a=0.25):
    """Constant-coefficient potential with b = -a and diagonal 1/2."""
    if a == 0:
        raise ConfigError("helicoid parameter must be nonzero")
    b = -a
    c = 0.5
    return HoloPotential({
        -1: _const_term([[0.0, a], [-b, 0.0]]),
        0: _const_term([[c, 0.0], [0.0, -c]]),
        1: _const_term([[0.0, b], [-a, 0.0]]),
    })


def smyth_potential(k):
    """Monomial lower-left entry z^k at the lowest power."""
    if k < 1:
        raise ConfigError("smyth exponent must be a positive integer")
    c = np.zeros((k + 1, 2, 2), dtype=complex)
    c[0, 0, 1] = 1.0
    c[k, 1, 0] = 1.0
    return HoloPotential({-1: c})


@dataclass(frozen=True)
class ExampleSpec:
    name: str
    grid: DomainGrid
    z0: complex
    self_dual: bool
    exclude_disk: float | None
    verify_grid: DomainGrid = None  # residual-suite grid when it differs

    def potential(self):
        if self.name == "paraboloid":
            return paraboloid_potential()
        if self.name == "helicoid":
            return helicoid_potential()
        if self.name.startswith("smyth-"):
            return smyth_potential(int(self.name.split("-", 1)[1]))
        raise ConfigError(f"unknown example {self.name!r}")


def builtin_example(name):
    if name == "paraboloid":
        return ExampleSpec(name, DomainGrid(-1, 1, -1, 1, 41, 41), 0j, True, None)
    if name == "helicoid":
        # the fields grow like cosh(2|z|): a tighter domain and finer grid
        # keep the extraction floors at the paraboloid's level
        return ExampleSpec(name, DomainGrid(-0.5, 0.5, -0.5, 0.5, 81, 81),
                           0j, True, None)
    if name.startswith("smyth-"):
        try:
            k = int(name.split("-", 1)[1])
        except ValueError:
            raise ConfigError(f"unknown example {name!r}") from None
        if k < 1:
            raise ConfigError("smyth exponent must be >= 1")
        # export/figure grid reaches the annulus radius 0.5; the residual
        # suite runs on a tighter, finer grid where desk-scale stencil
        # floors fit the tolerances (the corner fields grow steeply)
        return ExampleSpec(name, DomainGrid(-0.5, 0.5, -0.5, 0.5, 41, 41),
                           0j, False, 0.05,
                           DomainGrid(-0.3, 0.3, -0.3, 0.3, 101, 101))
    raise ConfigError(f"unknown example {name!r}")


BUILTIN_NAMES = ("paraboloid", "helicoid", "smyth-1", "smyth-2")


def _mul_into_window(phi, xi_at_z, N):
    """(phi * xi)(lam) truncated to the window [-N, N].

    phi has shape (P, 2, 2) for powers -N..N; xi_at_z maps power -> (2, 2).
    Returns (result, dropped) with the max magnitude that fell outside.
    """
    P = phi.shape[0]
    out = np.zeros_like(phi)
    dropped = 0.0
    for s, X in xi_at_z.items():
        prod = phi @ X
        if s == 0:
            out += prod
        elif s > 0:
            out[s:] += prod[:P - s]
            tail = np.max(np.abs(prod[P - s:]), initial=0.0)
            dropped = max(dropped, float(tail))
        else:
            out[:s] += prod[-s:]
            tail = np.max(np.abs(prod[:-s]), initial=0.0)
            dropped = max(dropped, float(tail))
    return out, dropped


def _march_potential(phi0, xi, z_start, dz, steps, substeps, N):
    """RK4 along the straight segments z_start + k*dz, returning every node."""
    out = [phi0]
    phi = phi0
    drop = 0.0
    h = 1.0 / substeps
    for k in range(steps):
        zk = z_start + k * dz
        for s in range(substeps):
            z0 = zk + dz * (s * h)
            zm = zk + dz * ((s + 0.5) * h)
            z1 = zk + dz * ((s + 1) * h)
            x0, xm, x1 = xi.eval(z0), xi.eval(zm), xi.eval(z1)
            k1, d1 = _mul_into_window(phi, x0, N)
            k2, d2 = _mul_into_window(phi + 0.5 * h * dz * k1, xm, N)
            k3, d3 = _mul_into_window(phi + 0.5 * h * dz * k2, xm, N)
            k4, d4 = _mul_into_window(phi + h * dz * k3, x1, N)
            phi = phi + (h * dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            drop = max(drop, d1, d2, d3, d4)
        out.append(phi)
    return out, drop


def integrate_potential(xi, grid, z0=0j, init=None, order=DEFAULT_ORDER,
                        substeps=8, column_first=True):
    """Solve dPhi = Phi xi dz from z0 over the grid.

    The connection is holomorphic (dz only), so the result is path
    independent; `column_first` selects the sweep used, and the two-path
    agreement is a separate check.  Returns a batched MatrixLoop over the
    grid nodes; truncation spill is recorded on the `.tail` attribute.
    """
    N = order
    P = 2 * N + 1
    if init is None:
        phi0 = np.zeros((P, 2, 2), dtype=complex)
        phi0[N] = np.eye(2)
    else:
        phi0 = np.zeros((P, 2, 2), dtype=complex)
        lo = max(init.low, -N)
        hi = min(init.high, N)
        phi0[lo + N:hi + N + 1] = init.coeffs[lo - init.low:hi - init.low + 1]

    corner = grid.node_z(0, 0)
    drop = 0.0
    if abs(corner - z0) > 0:
        steps = max(grid.nx, grid.ny)
        seg, d = _march_potential(phi0, xi, z0, (corner - z0) / steps,
                                  steps, substeps, N)
        phi0 = seg[-1]
        drop = max(drop, d)

    out = np.empty(grid.shape + (P, 2, 2), dtype=complex)
    if column_first:
        col, d = _march_potential(phi0, xi, corner, 1j * grid.hy,
                                  grid.ny - 1, substeps, N)
        drop = max(drop, d)
        for i in range(grid.ny):
            row, d = _march_potential(col[i], xi, grid.node_z(i, 0), grid.hx,
                                      grid.nx - 1, substeps, N)
            drop = max(drop, d)
            out[i] = np.stack(row, axis=0)
    else:
        row0, d = _march_potential(phi0, xi, corner, grid.hx,
                                   grid.nx - 1, substeps, N)
        drop = max(drop, d)
        for j in range(grid.nx):
            colj, d = _march_potential(row0[j], xi, grid.node_z(0, j),
                                       1j * grid.hy, grid.ny - 1, substeps, N)
            drop = max(drop, d)
            out[:, j] = np.stack(colj, axis=0)

    loop = MatrixLoop(out, -N)
    if xi.twisted:
        loop = loop.with_parity("twisted", tol=np.inf)
    loop.tail = drop
    return loop


@dataclass
class BigCellReport:
    """Per-node conditioning of the factorization system."""

    cond: np.ndarray
    failed: np.ndarray     # True = factorization failed at the node
    tail: float = 0.0      # truncation spill from the loop products

    def ok(self):
        return ~self.failed


def _circle_samples(n):
    return np.exp(2j * np.pi * np.arange(n) / n)


def iwasawa(phi, n_check=8):
    """Pointwise splitting Phi = F B+ with the reality and normalization
    contracts; returns (F, B+, report).

    F satisfies F(lam)^dag sigma3 F(lam) = sigma3 on the circle; B+ has
    only nonnegative powers and B+(0) is upper-triangular with positive
    real diagonal.  Failures (conditioning, loss of positivity) mark nodes
    in the report instead of raising.
    """
    N = phi.order
    M = 2 * N
    batch = phi.batch_shape

    s3 = MatrixLoop.constant(SIGMA3, parity="twisted")
    Z = s3.mul(phi.adjoint_on_circle()).mul(s3).mul(phi)

    def zc(j):
        return Z.coeff(j)

    # block-Toeplitz system: sum_m W_{-m} Z_{m-e} = -Z_{-e}, e = 1..M
    T = np.zeros(batch + (2 * M, 2 * M), dtype=complex)
    R = np.zeros(batch + (2 * M, 2), dtype=complex)
    for m in range(1, M + 1):
        for e in range(1, M + 1):
            T[..., 2 * (m - 1):2 * m, 2 * (e - 1):2 * e] = zc(m - e)
    for e in range(1, M + 1):
        R[..., 2 * (e - 1):2 * e, :] = \
            -np.swapaxes(zc(-e), -1, -2)

    sing = np.linalg.svd(T, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = sing[..., 0] / sing[..., -1]
    failed = ~np.isfinite(cond) | (cond > COND_CAP)
    T_safe = np.where(failed[..., None, None], np.eye(2 * M, dtype=complex), T)
    # W Z rows: solve T^T W^T = -R^T, i.e. transpose of W T = -R
    sol = np.linalg.solve(np.swapaxes(T_safe, -1, -2), R)
    W_blocks = np.swapaxes(sol, -1, -2).reshape(batch + (2, M, 2))
    W_coeffs = np.zeros(batch + (M + 1, 2, 2), dtype=complex)
    W_coeffs[..., M, :, :] = np.eye(2)
    for m in range(1, M + 1):
        W_coeffs[..., M - m, :, :] = W_blocks[..., :, m - 1, :]
    W = MatrixLoop(W_coeffs, -M)

    Zp_full = W.mul(Z)
    # powers below -M are not constrained by the solve; their mass measures
    # the truncation of the true minus-factor expansion
    lo = Zp_full.low
    neg_mass = float(np.max(np.abs(Zp_full.coeffs[..., :-lo, :, :]),
                            initial=0.0)) if lo < 0 else 0.0
    keep = Zp_full.coeffs[..., -lo:, :, :] if lo < 0 else Zp_full.coeffs
    Zp = MatrixLoop(keep[..., :2 * N + 1, :, :].copy(), 0)

    Z0 = Zp.coeff(0)
    r1_sq = Z0[..., 0, 0]
    bad_r1 = (r1_sq.real <= 0) | (np.abs(r1_sq.imag) > 1e-6 * np.abs(r1_sq.real) + 1e-12)
    r1 = np.sqrt(np.where(bad_r1, 1.0, r1_sq.real))
    b = Z0[..., 0, 1] / r1
    r2_sq = Z0[..., 1, 1].real + np.abs(b) ** 2
    bad_r2 = r2_sq <= 0
    r2 = np.sqrt(np.where(bad_r2, 1.0, r2_sq))
    failed = failed | bad_r1 | bad_r2

    Cinv = np.zeros(batch + (2, 2), dtype=complex)
    Cinv[..., 0, 0] = 1.0 / r1
    Cinv[..., 1, 0] = np.conj(b) / (r1 * r2)
    Cinv[..., 1, 1] = 1.0 / r2
    Bp = MatrixLoop(np.einsum("...ab,...jbc->...jac", Cinv, Zp.coeffs), 0)

    Bp_inv = plus_loop_inverse(Bp, 2 * N)
    F_wide = phi.mul(Bp_inv)
    F, tail = F_wide.truncated(N)
    if phi.parity == "twisted":
        F = F.with_parity("twisted", tol=np.inf)
        Bp = Bp.with_parity("twisted", tol=np.inf)

    report = BigCellReport(cond=cond, failed=failed,
                           tail=max(tail, neg_mass))
    return F, Bp, report


def iwasawa_residuals(phi, F, Bp, n_check=8, mask=None):
    """(reconstruction, reality) max residuals over circle samples."""
    recon = 0.0
    reality = 0.0
    live = None if mask is None else mask
    for lam in _circle_samples(n_check):
        pv = phi.eval(lam)
        fv = F.eval(lam)
        bv = Bp.eval(lam)
        r1 = np.max(np.abs(pv - fv @ bv), axis=(-2, -1))
        herm = np.swapaxes(fv.conj(), -1, -2) @ SIGMA3 @ fv - SIGMA3
        r2 = np.max(np.abs(herm), axis=(-2, -1))
        if live is not None:
            r1 = r1[live]
            r2 = r2[live]
        recon = max(recon, float(np.max(r1, initial=0.0)))
        reality = max(reality, float(np.max(r2, initial=0.0)))
    return recon, reality


@dataclass
class PipelineResult:
    """Everything the potential pipeline produces."""

    grid: DomainGrid
    lam_samples: list
    phi: MatrixLoop
    frame_loop: MatrixLoop     # gauged frame used for the surfaces
    bp: MatrixLoop
    report: BigCellReport
    sym: list                  # SymOutput per lam sample
    recon_residual: float
    reality_residual: float
    mask: np.ndarray           # export mask: big-cell failures + exclusions
    ok_mask: np.ndarray = None  # big-cell failures only (extraction domain)
    potential: HoloPotential = None
    name: str = ""

    def sym_at(self, lam):
        for s in self.sym:
            if abs(s.lam - lam) < 1e-12:
                return s
        raise KeyError(f"lam {lam} not sampled")


def frame_field_from_loop(floop, lam, grid, mask=None):
    """Evaluate a frame loop and its exact derivatives at one parameter."""
    d1 = floop.dlambda()
    d2 = d1.dlambda()
    return FrameField(F=floop.eval(lam), F_lam=d1.eval(lam),
                      F_lam2=d2.eval(lam), lam=complex(lam), grid=grid)


def _dirac_gauge(xi, grid, F, Bp, mask):
    """Point-dependent diagonal gauge making the frame an extended frame.

    The factorization normalization leaves a residual U(1) right gauge
    k(z) = diag(e^{i theta}, e^{-i theta}); the lowest spectral coefficient
    of F^{-1} dz F equals b0 xi_{-1} b0^{-1} with b0 = B+(0), and theta is
    chosen so its (1,2) entry lands on the negative imaginary axis (the
    Dirac-potential slot -e^{w/2} with e^{w/2} in i R_+).
    """
    b0 = Bp.coeff(0)
    xi_m1 = xi.eval_grid(grid.zz, -1)
    U_low = b0 @ xi_m1 @ np.linalg.inv(b0)
    slot = U_low[..., 0, 1]
    degenerate = np.abs(slot) < 1e-12 * np.max(np.abs(slot))
    theta = 0.5 * (np.angle(np.where(degenerate, 1.0, slot)) + 0.5 * np.pi)
    phase = np.exp(1j * theta)
    k = np.zeros(grid.shape + (2, 2), dtype=complex)
    k[..., 0, 0] = phase
    k[..., 1, 1] = np.conj(phase)
    k_inv = np.swapaxes(k, -1, -2).conj()
    F2 = MatrixLoop(np.einsum("...jab,...bc->...jac", F.coeffs, k), F.low,
                    F.parity)
    Bp2 = MatrixLoop(np.einsum("...ab,...jbc->...jac", k_inv, Bp.coeffs),
                     Bp.low, Bp.parity)
    return F2, Bp2, mask & ~degenerate


def dpw_pipeline(xi, grid, z0=0j, lam_samples=(1.0 + 0.0j,),
                 order=DEFAULT_ORDER, init=None, exclude_disk=None,
                 substeps=8, gauge=True, name=""):
    """Potential -> loops -> factorization -> both surfaces per parameter."""
    lam_samples = [complex(l) for l in lam_samples]
    for lam in lam_samples:
        if abs(abs(lam) - 1.0) > 1e-12:
            raise ConfigError(f"lam sample {lam} is not unit-modulus")
    phi = integrate_potential(xi, grid, z0=z0, init=init, order=order,
                              substeps=substeps)
    F, Bp, report = iwasawa(phi)
    ok_mask = report.ok()
    F, Bp, ok_mask = _dirac_gauge(xi, grid, F, Bp, ok_mask)
    mask = ok_mask
    if exclude_disk is not None:
        mask = mask & (np.abs(grid.zz) >= exclude_disk)
    recon, reality = iwasawa_residuals(phi, F, Bp, mask=mask)

    floop = F
    if gauge:
        gauged = MatrixLoop.constant(SPINOR_GAUGE).mul(F)
        if F.parity == "twisted":
            gauged = gauged.with_parity("twisted", tol=np.inf)
        floop = gauged

    syms = []
    fill = None if np.all(ok_mask) else ok_mask
    export_mask = None if np.all(mask) else mask
    for lam in lam_samples:
        fr = frame_field_from_loop(floop, lam, grid, mask=fill)
        sym = sym_maps(fr, mask=fill, source=name)
        if export_mask is not None:
            sym.f_minus.mask = export_mask
            sym.f_plus.mask = export_mask
        syms.append(sym)
    return PipelineResult(grid=grid, lam_samples=lam_samples, phi=phi,
                          frame_loop=floop, bp=Bp, report=report, sym=syms,
                          recon_residual=recon, reality_residual=reality,
                          mask=mask, ok_mask=ok_mask, potential=xi, name=name)


def run_example(name, grid=None, lam_samples=(1.0 + 0.0j,),
                order=DEFAULT_ORDER, substeps=8):
    spec = builtin_example(name)
    g = grid if grid is not None else spec.grid
    return dpw_pipeline(spec.potential(), g, z0=spec.z0,
                        lam_samples=lam_samples, order=order,
                        exclude_disk=spec.exclude_disk, substeps=substeps,
                        name=name)
