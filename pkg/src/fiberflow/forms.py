"""Pointwise linear algebra on coefficient blocks of real (1,1)-forms.

A form on the total space (z^1..z^n, s) is stored by its fiber block
(tau_{alpha beta-bar}), the mixed column (tau_{alpha s-bar}) and the real
base-base entry tau_{s s-bar}.  The geodesic curvature is the Schur
complement of the fiber block in the full (n+1)x(n+1) matrix.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError

_HERM_TOL = 1e-10


@dataclass
class HermitianForm:
    """Coefficient block of a real (1,1)-form at a point."""

    n: int
    fiber_block: np.ndarray   # (n, n) complex, entries tau_{alpha beta-bar}
    mixed: np.ndarray         # (n,) complex, entries tau_{alpha s-bar}
    ss: float                 # tau_{s s-bar}

    def __post_init__(self):
        self.fiber_block = np.asarray(self.fiber_block, dtype=complex).reshape(self.n, self.n)
        self.mixed = np.asarray(self.mixed, dtype=complex).reshape(self.n)
        self.ss = float(np.real(self.ss))
        herm_gap = np.max(np.abs(self.fiber_block - self.fiber_block.conj().T))
        if herm_gap > _HERM_TOL * (1.0 + np.max(np.abs(self.fiber_block))):
            raise ValueError(f"fiber block not Hermitian (gap {herm_gap:.3e})")

    def full_matrix(self):
        """Assembled (n+1)x(n+1) Hermitian matrix [[fiber, mixed], [mixed^H, ss]]."""
        n = self.n
        m = np.empty((n + 1, n + 1), dtype=complex)
        m[:n, :n] = self.fiber_block
        m[:n, n] = self.mixed
        m[n, :n] = self.mixed.conj()
        m[n, n] = self.ss
        return m


@dataclass
class HorizontalLift:
    """Fiber components of the horizontal lift of d/ds (s-component is 1)."""

    coeffs: np.ndarray  # (n,) complex


def _min_eig_estimate(block):
    return float(np.linalg.eigvalsh(block).min())


def fiber_inverse(form: HermitianForm) -> np.ndarray:
    """Inverse of the fiber block, by direct formulas for n <= 2."""
    a = form.fiber_block
    if form.n == 1:
        d = a[0, 0].real
        if d <= 0.0:
            raise DegenerateMetricError(
                f"fiber block not positive definite (entry {d:.6e})", eigenvalue=d)
        return np.array([[1.0 / d]], dtype=complex)
    if form.n == 2:
        det = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]).real
        tr = (a[0, 0] + a[1, 1]).real
        if det <= 0.0 or tr <= 0.0:
            raise DegenerateMetricError(
                f"fiber block not positive definite (det {det:.6e}, tr {tr:.6e})",
                eigenvalue=_min_eig_estimate(a))
        inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]], dtype=complex) / det
        return inv
    raise DegenerateMetricError(f"fiber dimension {form.n} not supported (n <= 2 only)")


def geodesic_curvature(form: HermitianForm) -> float:
    """Schur complement tau_{ss-bar} - tau_{s beta-bar} tau^{beta-bar alpha} tau_{alpha s-bar}."""
    inv = fiber_inverse(form)
    m = form.mixed
    return float(form.ss - np.real(m.conj() @ inv @ m))


def horizontal_lift(form: HermitianForm) -> HorizontalLift:
    """Unique (1,0) lift of d/ds that is form-orthogonal to the fiber directions."""
    inv = fiber_inverse(form)
    coeffs = -(form.mixed.conj() @ inv)
    return HorizontalLift(coeffs=np.asarray(coeffs).reshape(form.n))


def volume_identity_gap(form: HermitianForm) -> float:
    """|det(full matrix) - c(form) * det(fiber block)|; identically 0 in exact arithmetic."""
    c = geodesic_curvature(form)
    det_fiber = np.linalg.det(form.fiber_block).real
    det_full = np.linalg.det(form.full_matrix()).real
    return abs(det_full - c * det_fiber)
