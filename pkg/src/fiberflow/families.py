"""Defining functions of holomorphic families of strongly pseudoconvex domains.

Each built-in family supplies exact analytic derivatives of its defining
function r(z, s); the reference potential is g = -log(-r) and all second
derivatives of g follow from the closed jet of r.  All evaluators broadcast
over numpy arrays so that grid construction reuses the pointwise formulas.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateFamilyError, OutsideDomainError
from .forms import HermitianForm

BUILTIN_KINDS = ("product_disc", "unit_ball", "translated_disc", "hartogs", "polynomial")


@dataclass(frozen=True)
class FamilySpec:
    """A family of domains given by a defining function r(z, s) < 0.

    kind            one of BUILTIN_KINDS
    fiber_dim       n; grid solving requires n = 1, pointwise evaluation n in {1, 2}
    base_radius     radius of the sampled base disc in the s-plane
    hartogs_lambda  decay rate of the hartogs family r = |z|^2 - exp(-lambda |s|^2)
    coefficients    polynomial only: map (a, b, c, d) -> complex coefficient of
                    z^a zbar^b s^c sbar^d, subject to coeff(a,b,c,d) = conj(coeff(b,a,d,c))
    bbox            polynomial only: explicit fiber bounding box (x0, x1, y0, y1)
    """

    kind: str
    fiber_dim: int = 1
    base_radius: float = 0.9
    hartogs_lambda: float = 1.0
    coefficients: tuple = field(default=())
    bbox: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in BUILTIN_KINDS:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")
        if self.fiber_dim < 1:
            raise ConfigurationError("fiber_dim must be >= 1")
        if self.base_radius <= 0:
            raise ConfigurationError("base_radius must be positive")
        if self.kind == "hartogs" and self.hartogs_lambda <= 0:
            raise ConfigurationError("hartogs lambda must be positive")
        if self.kind == "polynomial":
            if self.fiber_dim != 1:
                raise ConfigurationError("polynomial families support fiber_dim = 1 only")
            if not self.coefficients:
                raise ConfigurationError("polynomial family needs coefficients")
            table = dict(self.coefficients)
            for (a, b, c, d), coeff in table.items():
                partner = table.get((b, a, d, c))
                if partner is None or abs(np.conj(partner) - coeff) > 1e-14 * (1 + abs(coeff)):
                    raise ConfigurationError(
                        f"reality constraint violated at coefficient (a,b,c,d)=({a},{b},{c},{d})")
            if len(self.bbox) != 4:
                raise ConfigurationError("polynomial family needs an explicit bbox (x0, x1, y0, y1)")

    @property
    def coeff_table(self):
        return dict(self.coefficients)


@dataclass
class Jet2:
    """r and its first/second complex derivatives at a point."""

    r: float
    r_alpha: np.ndarray        # (n,)  d r / d z^alpha
    r_s: complex
    r_fiber_hess: np.ndarray   # (n, n)  r_{alpha beta-bar}
    r_alpha_sbar: np.ndarray   # (n,)  r_{alpha s-bar}
    r_ssbar: float


@dataclass
class ReferenceData:
    """Potential g = -log(-r), its full second-derivative block, F-density and |dg|^2."""

    g_potential: float
    form: HermitianForm
    F: float
    grad_norm_sq: float


def _poly_sum(table, z, s, dz=0, dzbar=0, ds=0, dsbar=0):
    """Exact monomial differentiation of sum coeff * z^a zbar^b s^c sbar^d."""
    zbar, sbar = np.conj(z), np.conj(s)
    total = np.zeros(np.broadcast(z, s).shape, dtype=complex)
    for (a, b, c, d), coeff in table.items():
        if a < dz or b < dzbar or c < ds or d < dsbar:
            continue
        factor = 1.0
        for (e, k) in ((a, dz), (b, dzbar), (c, ds), (d, dsbar)):
            for j in range(k):
                factor *= e - j
        total = total + coeff * factor * z ** (a - dz) * zbar ** (b - dzbar) \
            * s ** (c - ds) * sbar ** (d - dsbar)
    return total


def jet_arrays(spec: FamilySpec, z, s):
    """Broadcast jet of r.  z has shape (..., n), s has shape (...).

    Returns (r, r_alpha, r_s, hess, r_alpha_sbar, r_ssbar) with the leading
    shape of the broadcast inputs.
    """
    z = np.asarray(z, dtype=complex)
    s = np.asarray(s, dtype=complex)
    n = spec.fiber_dim
    if z.shape[-1:] != (n,):
        raise ConfigurationError(f"z must have trailing dimension {n}")
    shape = np.broadcast(z[..., 0], s).shape
    eye = np.broadcast_to(np.eye(n, dtype=complex), shape + (n, n))
    zeros_v = np.zeros(shape + (n,), dtype=complex)
    zeros = np.zeros(shape)

    if spec.kind == "product_disc":
        r = np.sum(np.abs(z) ** 2, axis=-1) - 1.0
        return r, np.conj(z) + zeros_v, zeros.astype(complex), eye, zeros_v, zeros

    if spec.kind == "unit_ball":
        r = np.sum(np.abs(z) ** 2, axis=-1) + np.abs(s) ** 2 - 1.0
        r_s = np.conj(s) + zeros.astype(complex)
        return r, np.conj(z) + zeros_v, r_s, eye, zeros_v, zeros + 1.0

    if spec.kind == "translated_disc":
        # translate the first fiber coordinate by s
        u = z.copy() + zeros_v
        u[..., 0] = u[..., 0] - s
        r = np.sum(np.abs(u) ** 2, axis=-1) - 1.0
        r_s = -np.conj(u[..., 0]) + zeros.astype(complex)
        r_as = zeros_v.copy()
        r_as[..., 0] = -1.0
        return r, np.conj(u), r_s, eye, r_as, zeros + 1.0

    if spec.kind == "hartogs":
        lam = spec.hartogs_lambda
        e = np.exp(-lam * np.abs(s) ** 2)
        r = np.sum(np.abs(z) ** 2, axis=-1) - e
        r_s = lam * np.conj(s) * e + zeros.astype(complex)
        r_ssbar = lam * e * (1.0 - lam * np.abs(s) ** 2) + zeros
        return r, np.conj(z) + zeros_v, r_s, eye, zeros_v, r_ssbar

    # polynomial, n = 1
    table = spec.coeff_table
    z1 = z[..., 0]
    r = np.real(_poly_sum(table, z1, s)) + zeros
    r_z = _poly_sum(table, z1, s, dz=1)
    r_s = _poly_sum(table, z1, s, ds=1)
    r_zzbar = np.real(_poly_sum(table, z1, s, dz=1, dzbar=1))
    r_zsbar = _poly_sum(table, z1, s, dz=1, dsbar=1)
    r_ssbar = np.real(_poly_sum(table, z1, s, ds=1, dsbar=1))
    hess = r_zzbar[..., None, None].astype(complex)
    return (r, r_z[..., None], r_s + zeros.astype(complex), hess,
            r_zsbar[..., None], r_ssbar + zeros)


def _check_fiber_pd(spec, hess):
    n = spec.fiber_dim
    if n == 1:
        ok = hess[..., 0, 0].real > 0
    elif n == 2:
        det = np.real(hess[..., 0, 0] * hess[..., 1, 1] - hess[..., 0, 1] * hess[..., 1, 0])
        ok = (hess[..., 0, 0].real > 0) & (det > 0)
    else:
        raise ConfigurationError("pointwise evaluation supports fiber_dim in {1, 2}")
    if not np.all(ok):
        raise DegenerateFamilyError(
            f"fiber Hessian not positive definite at {int(np.sum(~ok))} sample point(s)")


def _batched_inverse(spec, hess):
    n = spec.fiber_dim
    if n == 1:
        return 1.0 / hess
    det = hess[..., 0, 0] * hess[..., 1, 1] - hess[..., 0, 1] * hess[..., 1, 0]
    inv = np.empty_like(hess)
    inv[..., 0, 0] = hess[..., 1, 1]
    inv[..., 1, 1] = hess[..., 0, 0]
    inv[..., 0, 1] = -hess[..., 0, 1]
    inv[..., 1, 0] = -hess[..., 1, 0]
    return inv / det[..., None, None]


def reference_arrays(spec: FamilySpec, z, s):
    """Broadcast reference data: the full block of g = -log(-r), F and |dg|^2.

    Component formula: g_{AB-bar} = r_{AB-bar}/(-r) + r_A r_{B-bar}/r^2.
    Returns a dict with keys r, g_fiber, g_mixed, g_ss, F, grad_norm_sq.
    """
    r, r_a, r_s, hess, r_asb, r_ssb = jet_arrays(spec, z, s)
    if np.any(r >= 0):
        raise OutsideDomainError(f"{int(np.sum(r >= 0))} sample point(s) outside the domain")
    _check_fiber_pd(spec, hess)

    neg_r = -r
    g_fiber = hess / neg_r[..., None, None] \
        + r_a[..., :, None] * np.conj(r_a)[..., None, :] / (r ** 2)[..., None, None]
    g_mixed = r_asb / neg_r[..., None] + r_a * np.conj(r_s)[..., None] / (r ** 2)[..., None]
    g_ss = r_ssb / neg_r + np.abs(r_s) ** 2 / r ** 2

    inv = _batched_inverse(spec, hess)
    dr_sq = np.real(np.einsum("...a,...ab,...b->...", np.conj(r_a), inv, r_a))
    det = np.real(np.linalg.det(hess)) if spec.fiber_dim > 1 else hess[..., 0, 0].real
    log_arg = det * (neg_r + dr_sq)
    if np.any(log_arg <= 0):
        raise DegenerateFamilyError("nonpositive argument in F-density")
    return {
        "r": r,
        "g_fiber": g_fiber,
        "g_mixed": g_mixed,
        "g_ss": np.real(g_ss),
        "F": -np.log(log_arg),
        "grad_norm_sq": dr_sq / (dr_sq + neg_r),
    }


def eval_jet(spec: FamilySpec, z, s) -> Jet2:
    """Exact analytic jet of r at a single point.  z: scalar (n=1) or length-n sequence."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    r, r_a, r_s, hess, r_asb, r_ssb = jet_arrays(spec, z, complex(s))
    return Jet2(r=float(r), r_alpha=r_a, r_s=complex(r_s),
                r_fiber_hess=hess, r_alpha_sbar=r_asb, r_ssbar=float(r_ssb))


def _jet_reference(spec_dim, jet: Jet2):
    if jet.r >= 0:
        raise OutsideDomainError(f"point outside the domain (r = {jet.r:.6e})")
    n = spec_dim
    hess = jet.r_fiber_hess
    if n == 1:
        if hess[0, 0].real <= 0:
            raise DegenerateFamilyError("fiber Hessian not positive definite")
        inv = 1.0 / hess
        det = hess[0, 0].real
    elif n == 2:
        det = np.real(np.linalg.det(hess))
        if hess[0, 0].real <= 0 or det <= 0:
            raise DegenerateFamilyError("fiber Hessian not positive definite")
        inv = np.linalg.inv(hess)
    else:
        raise ConfigurationError("pointwise evaluation supports fiber_dim in {1, 2}")
    dr_sq = float(np.real(jet.r_alpha.conj() @ inv @ jet.r_alpha))
    return inv, det, dr_sq


def F_density(jet: Jet2) -> float:
    """F = -log(det(r_{alpha beta-bar}) * (-r + |dr|^2)); extends smoothly to r = 0."""
    n = jet.r_alpha.shape[0]
    _, det, dr_sq = _jet_reference(n, jet)
    log_arg = det * (-jet.r + dr_sq)
    if log_arg <= 0:
        raise DegenerateFamilyError("nonpositive argument in F-density")
    return float(-np.log(log_arg))


def reference_form(jet: Jet2) -> ReferenceData:
    """Full second-derivative block of g = -log(-r) at the jet's point."""
    n = jet.r_alpha.shape[0]
    _, _, dr_sq = _jet_reference(n, jet)
    neg_r = -jet.r
    fiber = jet.r_fiber_hess / neg_r \
        + np.outer(jet.r_alpha, jet.r_alpha.conj()) / jet.r ** 2
    mixed = jet.r_alpha_sbar / neg_r + jet.r_alpha * np.conj(jet.r_s) / jet.r ** 2
    ss = jet.r_ssbar / neg_r + abs(jet.r_s) ** 2 / jet.r ** 2
    form = HermitianForm(n=n, fiber_block=fiber, mixed=mixed, ss=float(np.real(ss)))
    return ReferenceData(
        g_potential=float(-np.log(neg_r)),
        form=form,
        F=F_density(jet),
        grad_norm_sq=dr_sq / (dr_sq + neg_r),
    )


def fiber_bbox(spec: FamilySpec, s, pad=0.0):
    """Bounding box (x0, x1, y0, y1) of the fiber over s (n = 1 grids only)."""
    s = complex(s)
    if spec.kind == "product_disc":
        c, rad = 0j, 1.0
    elif spec.kind == "unit_ball":
        rr = 1.0 - abs(s) ** 2
        if rr <= 0:
            raise OutsideDomainError(f"empty fiber over s = {s}")
        c, rad = 0j, float(np.sqrt(rr))
    elif spec.kind == "translated_disc":
        c, rad = s, 1.0
    elif spec.kind == "hartogs":
        c, rad = 0j, float(np.exp(-spec.hartogs_lambda * abs(s) ** 2 / 2))
    else:
        x0, x1, y0, y1 = spec.bbox
        return (x0 - pad, x1 + pad, y0 - pad, y1 + pad)
    return (c.real - rad - pad, c.real + rad + pad, c.imag - rad - pad, c.imag + rad + pad)
