"""2x2 complex matrices, the SU(1,1) structure check, and truncated
matrix-valued Laurent polynomials in the spectral parameter.

Loops carry an optional parity tag: "twisted" means diagonal entries are
supported on even powers and off-diagonal entries on odd powers;
"anti" is the opposite.  Differentiation in the parameter flips the tag.
All loop values broadcast over leading batch axes of the coefficient
array, which has shape (..., P, 2, 2) for P consecutive powers.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SQRT_I = np.exp(0.25j * np.pi)  # fixed branch of sqrt(i), used everywhere

SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# Orthogonal basis of su(1,1) with timelike third vector.
E1 = 0.5 * np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
E2 = 0.5 * np.array([[0.0, -1.0], [-1.0, 0.0]], dtype=complex)
E3 = 0.5 * np.array([[-1.0j, 0.0], [0.0, 1.0j]], dtype=complex)

_PARITY_FLIP = {"twisted": "anti", "anti": "twisted", None: None}


def su11_residual(M):
    """Deviation of M from SU(1,1), max over three defining relations.

    Checks M^dag sigma3 M = sigma3, det M = 1, and the reality form
    [[a, b], [conj(b), conj(a)]]; entrywise max-abs norms.
    """
    M = np.asarray(M, dtype=complex)
    herm = np.swapaxes(M.conj(), -1, -2) @ SIGMA3 @ M - SIGMA3
    r1 = np.max(np.abs(herm), axis=(-2, -1))
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    r2 = np.abs(det - 1.0)
    r3 = np.maximum(np.abs(M[..., 1, 0] - M[..., 0, 1].conj()),
                    np.abs(M[..., 1, 1] - M[..., 0, 0].conj()))
    return np.maximum(np.maximum(r1, r2), r3)


def _parity_violation(coeffs, low, parity):
    """Max magnitude sitting on forbidden-parity entries."""
    if parity is None:
        return 0.0
    worst = 0.0
    for k in range(coeffs.shape[-3]):
        j = low + k
        even = (j % 2 == 0)
        diag_allowed = even if parity == "twisted" else not even
        c = coeffs[..., k, :, :]
        diag = max(np.max(np.abs(c[..., 0, 0])), np.max(np.abs(c[..., 1, 1])))
        off = max(np.max(np.abs(c[..., 0, 1])), np.max(np.abs(c[..., 1, 0])))
        worst = max(worst, off if diag_allowed else diag)
    return worst


@dataclass
class MatrixLoop:
    """Truncated Laurent polynomial sum_j A_j lam^j with 2x2 coefficients.

    coeffs[..., k, :, :] is the coefficient of lam^(low + k).
    """

    coeffs: np.ndarray
    low: int
    parity: str | None = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape[-2:] != (2, 2):
            raise ValueError("coefficients must be (..., P, 2, 2)")
        if self.parity not in ("twisted", "anti", None):
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.parity is not None:
            bad = _parity_violation(self.coeffs, self.low, self.parity)
            if bad != 0.0:
                raise ValueError(
                    f"{self.parity} loop has forbidden-parity mass {bad:.3e}"
                )

    @property
    def high(self):
        return self.low + self.coeffs.shape[-3] - 1

    @property
    def order(self):
        return max(abs(self.low), abs(self.high))

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-3]

    @classmethod
    def identity(cls, batch_shape=(), parity="twisted"):
        c = np.zeros(batch_shape + (1, 2, 2), dtype=complex)
        c[..., 0, :, :] = np.eye(2)
        return cls(c, 0, parity)

    @classmethod
    def constant(cls, M, parity=None):
        M = np.asarray(M, dtype=complex)
        return cls(M[..., None, :, :], 0, parity)

    def coeff(self, j):
        """Coefficient of lam^j (zeros outside the window)."""
        if self.low <= j <= self.high:
            return self.coeffs[..., j - self.low, :, :]
        return np.zeros(self.batch_shape + (2, 2), dtype=complex)

    def eval(self, lam, allow_off_circle=False):
        """Horner evaluation at lam; on-circle unless explicitly allowed."""
        lam = complex(lam)
        if not allow_off_circle and abs(abs(lam) - 1.0) > 1e-12:
            raise ValueError(f"|lam| = {abs(lam):.6f} is off the unit circle")
        out = np.zeros(self.batch_shape + (2, 2), dtype=complex)
        for k in range(self.coeffs.shape[-3] - 1, -1, -1):
            out = out * lam + self.coeffs[..., k, :, :]
        if self.low != 0:
            out = out * lam ** self.low
        return out

    def dlambda(self):
        """Exact derivative in the parameter: j A_j shifted to power j-1."""
        P = self.coeffs.shape[-3]
        powers = np.arange(self.low, self.low + P)
        c = self.coeffs * powers[:, None, None]
        return MatrixLoop(c, self.low - 1, _PARITY_FLIP[self.parity])

    def mul(self, other):
        """Cauchy product; window widens to the sum of the windows."""
        a, b = self.coeffs, other.coeffs
        Pa, Pb = a.shape[-3], b.shape[-3]
        batch = np.broadcast_shapes(self.batch_shape, other.batch_shape)
        out = np.zeros(batch + (Pa + Pb - 1, 2, 2), dtype=complex)
        for k in range(Pa):
            out[..., k:k + Pb, :, :] += np.einsum(
                "...ab,...jbc->...jac", a[..., k, :, :], b)
        parity = None
        if self.parity is not None and other.parity is not None:
            parity = "twisted" if self.parity == other.parity else "anti"
        return MatrixLoop(out, self.low + other.low, parity)

    def add(self, other):
        low = min(self.low, other.low)
        high = max(self.high, other.high)
        batch = np.broadcast_shapes(self.batch_shape, other.batch_shape)
        out = np.zeros(batch + (high - low + 1, 2, 2), dtype=complex)
        out[..., self.low - low:self.high - low + 1, :, :] += self.coeffs
        out[..., other.low - low:other.high - low + 1, :, :] += other.coeffs
        parity = self.parity if self.parity == other.parity else None
        return MatrixLoop(out, low, parity)

    def scaled(self, factor):
        return replace(self, coeffs=self.coeffs * factor)

    def truncated(self, order):
        """Clip the window to [-order, order]; returns (loop, tail mass)."""
        lo = max(self.low, -order)
        hi = min(self.high, order)
        if lo > hi:
            raise ValueError("window collapsed to nothing")
        keep = self.coeffs[..., lo - self.low:hi - self.low + 1, :, :]
        tail = 0.0
        if lo > self.low:
            tail = max(tail, float(np.max(np.abs(
                self.coeffs[..., :lo - self.low, :, :]), initial=0.0)))
        if hi < self.high:
            tail = max(tail, float(np.max(np.abs(
                self.coeffs[..., hi - self.low + 1:, :, :]), initial=0.0)))
        return MatrixLoop(keep.copy(), lo, self.parity), tail

    def adjoint_on_circle(self):
        """Loop whose circle values are the conjugate transposes of self's."""
        c = np.swapaxes(self.coeffs.conj(), -1, -2)[..., ::-1, :, :]
        return MatrixLoop(c.copy(), -self.high, self.parity)

    def with_parity(self, parity, tol=1e-10):
        """Claim a parity, zeroing forbidden mass below tol (else raise)."""
        bad = _parity_violation(self.coeffs, self.low, parity)
        if bad > tol:
            raise ValueError(f"forbidden-parity mass {bad:.3e} exceeds {tol:.1e}")
        c = self.coeffs.copy()
        for k in range(c.shape[-3]):
            j = self.low + k
            even = (j % 2 == 0)
            diag_allowed = even if parity == "twisted" else not even
            if diag_allowed:
                c[..., k, 0, 1] = 0.0
                c[..., k, 1, 0] = 0.0
            else:
                c[..., k, 0, 0] = 0.0
                c[..., k, 1, 1] = 0.0
        return MatrixLoop(c, self.low, parity)

    def at_node(self, index):
        """Single-node loop out of a batched one."""
        return MatrixLoop(self.coeffs[index], self.low, self.parity)

    def to_json(self):
        if self.batch_shape:
            raise ValueError("only unbatched loops serialize to JSON")
        coeffs = []
        for k in range(self.coeffs.shape[0]):
            j = self.low + k
            entries = []
            for r in range(2):
                for c in range(2):
                    v = self.coeffs[k, r, c]
                    entries.append([float(v.real), float(v.imag)])
            coeffs.append([j, entries])
        return {
            "schema": 1,
            "order": self.order,
            "twisted": self.parity == "twisted",
            "coefficients": coeffs,
        }

    @classmethod
    def from_json(cls, data):
        powers = [int(item[0]) for item in data["coefficients"]]
        low, high = min(powers), max(powers)
        c = np.zeros((high - low + 1, 2, 2), dtype=complex)
        for item in data["coefficients"]:
            j, entries = int(item[0]), item[1]
            for idx, (re, im) in enumerate(entries):
                c[j - low, idx // 2, idx % 2] = re + 1j * im
        parity = "twisted" if data.get("twisted") else None
        return cls(c, low, parity)


def loop_eval(L, lam, allow_off_circle=False):
    return L.eval(lam, allow_off_circle=allow_off_circle)


def loop_dlambda(L):
    return L.dlambda()


def loop_mul(L1, L2):
    return L1.mul(L2)


def plus_loop_inverse(L, order):
    """Power-series inverse of a plus-loop, truncated at `order`.

    Requires low == 0 and an invertible constant term.
    """
    if L.low != 0:
        raise ValueError("plus-loop inversion needs low == 0")
    b0_inv = np.linalg.inv(L.coeffs[..., 0, :, :])
    P = min(L.coeffs.shape[-3], order + 1)
    out = np.zeros(L.batch_shape + (order + 1, 2, 2), dtype=complex)
    out[..., 0, :, :] = b0_inv
    for k in range(1, order + 1):
        acc = np.zeros(L.batch_shape + (2, 2), dtype=complex)
        for m in range(1, min(k, P - 1) + 1):
            acc += np.einsum("...ab,...bc->...ac",
                             L.coeffs[..., m, :, :], out[..., k - m, :, :])
        out[..., k, :, :] = -np.einsum("...ab,...bc->...ac", b0_inv, acc)
    return MatrixLoop(out, 0, None)
