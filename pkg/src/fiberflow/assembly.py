"""Assembly of the total-space form over a 3x3 stencil of base points.

Nine fibers over s0 + delta*(p + iq), p, q in {-1, 0, 1}, share one grid
lattice.  Base derivatives are second-order central differences across the
stencil; fiber derivatives are central differences on the lattice.  All
derived fields live on the common mask (nodes masked in all nine fibers)
eroded as needed for stencil width.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, EmptyMaskError, FiberflowError
from .families import FamilySpec, fiber_bbox
from .fiber_flow import FiberGrid, build_grid, erode8

OFFSETS = [(p, q) for q in (-1, 0, 1) for p in (-1, 0, 1)]


@dataclass
class BaseStencil:
    """3x3 stencil of fibers sharing bbox, spacing and node indexing."""

    spec: FamilySpec
    s0: complex
    delta: float
    h: float
    eps_cut: float
    grids: dict            # (p, q) -> FiberGrid
    common_mask: np.ndarray
    cinterior: np.ndarray  # common_mask eroded once: total form defined here
    cinterior2: np.ndarray  # eroded twice: fields needing fiber derivatives of the form

    @property
    def center(self) -> FiberGrid:
        return self.grids[(0, 0)]

    def s_node(self, p, q):
        return self.s0 + self.delta * (p + 1j * q)

    def geometry_key(self):
        return self.center.geometry_key() + (self.delta,)


def build_stencil(spec: FamilySpec, s0, delta, h, eps_cut, pad=None) -> BaseStencil:
    s0 = complex(s0)
    if delta <= 0:
        raise ValueError("delta must be positive")
    pad = 3 * h if pad is None else pad
    boxes = [fiber_bbox(spec, s0 + delta * (p + 1j * q), pad=pad) for p, q in OFFSETS]
    bbox = (min(b[0] for b in boxes), max(b[1] for b in boxes),
            min(b[2] for b in boxes), max(b[3] for b in boxes))
    grids = {(p, q): build_grid(spec, s0 + delta * (p + 1j * q), h, eps_cut, bbox=bbox)
             for p, q in OFFSETS}
    common = np.logical_and.reduce([grids[o].mask for o in OFFSETS])
    if not common.any():
        raise EmptyMaskError("common mask of the base stencil is empty")
    cint = erode8(common)
    return BaseStencil(spec=spec, s0=s0, delta=delta, h=h, eps_cut=eps_cut,
                       grids=grids, common_mask=common,
                       cinterior=cint, cinterior2=erode8(cint))


# ---------------------------------------------------------------------------
# finite-difference helpers on 2D lattice fields (NaN marks undefined edges)

def _dx(f, h):
    out = np.full_like(f, np.nan)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * h)
    return out


def _dy(f, h):
    out = np.full_like(f, np.nan)
    out[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2.0 * h)
    return out


def d_z(f, h):
    """d/dz = (d/dx - i d/dy)/2 by central differences."""
    return 0.5 * (_dx(f.astype(complex), h) - 1j * _dy(f.astype(complex), h))


def d_zbar(f, h):
    return 0.5 * (_dx(f.astype(complex), h) + 1j * _dy(f.astype(complex), h))


def lap5(f, h):
    """5-point Laplacian f_xx + f_yy."""
    out = np.full_like(np.asarray(f, dtype=float) if f.dtype != complex else f, np.nan)
    out[1:-1, 1:-1] = (f[1:-1, 2:] + f[1:-1, :-2] + f[2:, 1:-1] + f[:-2, 1:-1]
                       - 4.0 * f[1:-1, 1:-1]) / h ** 2
    return out


def mixed_s_derivatives(stencil: BaseStencil, fields):
    """Central-difference s-derivatives of a per-fiber field over the stencil.

    fields maps (p, q) to a lattice array.  Returns (f_s, f_sbar, f_ssbar);
    with s = u + iv, d/ds = (d/du - i d/dv)/2 and d/dsbar = (d/du + i d/dv)/2.
    """
    d = stencil.delta
    f_u = (fields[(1, 0)] - fields[(-1, 0)]) / (2.0 * d)
    f_v = (fields[(0, 1)] - fields[(0, -1)]) / (2.0 * d)
    f_s = 0.5 * (f_u - 1j * f_v)
    f_sbar = 0.5 * (f_u + 1j * f_v)
    f_ssbar = (fields[(1, 0)] + fields[(-1, 0)] + fields[(0, 1)] + fields[(0, -1)]
               - 4.0 * fields[(0, 0)]) / (4.0 * d ** 2)
    return f_s, f_sbar, f_ssbar


@dataclass
class TotalFormField:
    """Coefficients of the total-space form g(t) = -log(-r) + phi(t) on the lattice."""

    t: float
    h: float
    fiber: np.ndarray      # g(t)_{z z-bar}, real
    mixed: np.ndarray      # g(t)_{z s-bar}, complex
    ss: np.ndarray         # g(t)_{s s-bar}, real
    valid: np.ndarray      # bool; where all three components are defined

    def c(self):
        """Geodesic-curvature field (Schur complement, n = 1)."""
        out = np.full(self.fiber.shape, np.nan)
        v = self.valid
        out[v] = self.ss[v] - np.abs(self.mixed[v]) ** 2 / self.fiber[v]
        return out


def fiber_metric(grid: FiberGrid, phi):
    """Discrete evolved fiber metric g_zz + phi_{z z-bar} on the lattice."""
    return grid.g_zz + np.real(lap5(phi, grid.h)) / 4.0


def assemble_total_form(stencil: BaseStencil, phis, t) -> TotalFormField:
    """Assemble g(t) over cinterior; phis maps (p, q) to the fiber's phi array.

    The fiber block comes from the center fiber's discrete metric; the mixed
    and ss blocks add stencil s-derivatives of phi to the analytic reference
    parts.
    """
    gc = stencil.center
    fiber = fiber_metric(gc, phis[(0, 0)])
    phi_z = {o: d_z(phis[o], stencil.h) for o in OFFSETS}
    _, phi_zsbar, _ = mixed_s_derivatives(stencil, phi_z)
    mixed = gc.g_zs + phi_zsbar
    _, _, phi_ssbar = mixed_s_derivatives(stencil, phis)
    ss = gc.g_ss + np.real(phi_ssbar)
    valid = stencil.cinterior & np.isfinite(fiber) & np.isfinite(mixed) & np.isfinite(ss)
    if np.any(fiber[valid] <= 0):
        worst = float(np.nanmin(fiber[valid]))
        raise DegenerateMetricError(
            f"assembled fiber block lost positivity (min {worst:.3e})", eigenvalue=worst)
    return TotalFormField(t=float(t), h=stencil.h, fiber=np.real(fiber),
                          mixed=mixed, ss=np.real(ss), valid=valid)


def c_field(form: TotalFormField):
    return form.c()


def dbar_v_norm_sq(form: TotalFormField):
    """|dbar of the horizontal lift|^2 via the coordinate-invariant expression.

    A = -d/dzbar (g_{s z-bar} g^{z-bar z}); for n = 1 the squared norm is |A|^2.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        b = np.where(form.valid, np.conj(form.mixed) / form.fiber, np.nan)
    a = -d_zbar(b, form.h)
    out = np.abs(a) ** 2
    out[~np.isfinite(out)] = np.nan
    return out


def _masked_sup(field, region):
    vals = field[region & np.isfinite(field)]
    return float(np.abs(vals).max()) if vals.size else float("nan")


def berman_residual(stencil: BaseStencil, phis_minus, phis_center, phis_plus,
                    t, dt_probe, region=None):
    """Residual of (d/dt - Lap_t) c + (n+1) c = |dbar v|^2 at time t.

    Time derivative by a centered probe over [t - dt_probe, t + dt_probe];
    Lap_t = g(t)^{z-bar z} d_z d_zbar with the 5-point stencil.
    Returns (residual field, sup norm, L2 norm over the region).
    """
    k = stencil.center.n_plus_1
    form0 = assemble_total_form(stencil, phis_center, t)
    c_minus = assemble_total_form(stencil, phis_minus, t - dt_probe).c()
    c_plus = assemble_total_form(stencil, phis_plus, t + dt_probe).c()
    c0 = form0.c()
    dcdt = (c_plus - c_minus) / (2.0 * dt_probe)
    lap_c = np.real(lap5(c0, stencil.h)) / 4.0 / form0.fiber
    resid = dcdt - lap_c + k * c0 - dbar_v_norm_sq(form0)
    where = stencil.cinterior2 if region is None else (stencil.cinterior2 & region)
    ok = where & np.isfinite(resid)
    vals = resid[ok]
    sup = float(np.abs(vals).max()) if vals.size else float("nan")
    l2 = float(np.sqrt(np.sum(vals ** 2) * stencil.h ** 2)) if vals.size else float("nan")
    return resid, sup, l2


def log_det_fiber_fields(stencil: BaseStencil, phis):
    """log det of each fiber's discrete evolved metric (n = 1: log of g(t)_zz)."""
    out = {}
    for o in OFFSETS:
        w = fiber_metric(stencil.grids[o], phis[o])
        with np.errstate(invalid="ignore"):
            out[o] = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), np.nan)
    return out


def relative_flow_residual(stencil: BaseStencil, phis_minus, phis_center, phis_plus,
                           t, dt_probe, region=None):
    """ss-bar component residual of d/dt w(t) = Theta_{w(t)} - (n+1) w(t)."""
    k = stencil.center.n_plus_1
    ss0 = assemble_total_form(stencil, phis_center, t).ss
    ss_minus = assemble_total_form(stencil, phis_minus, t - dt_probe).ss
    ss_plus = assemble_total_form(stencil, phis_plus, t + dt_probe).ss
    dss_dt = (ss_plus - ss_minus) / (2.0 * dt_probe)
    _, _, ld_ssbar = mixed_s_derivatives(stencil, log_det_fiber_fields(stencil, phis_center))
    resid = dss_dt - np.real(ld_ssbar) + k * ss0
    where = stencil.cinterior if region is None else (stencil.cinterior & region)
    return resid, _masked_sup(resid, where)


def ke_relative_residual(stencil: BaseStencil, psis, region=None):
    """Residual of Theta_rho = (n+1) rho on the ss-bar and fiber components."""
    k = stencil.center.n_plus_1
    form = assemble_total_form(stencil, psis, t=float("inf"))
    ld = log_det_fiber_fields(stencil, psis)
    _, _, ld_ssbar = mixed_s_derivatives(stencil, ld)
    resid_ss = np.real(ld_ssbar) - k * form.ss
    resid_fiber = np.real(lap5(ld[(0, 0)], stencil.h)) / 4.0 - k * form.fiber
    where_ss = stencil.cinterior if region is None else (stencil.cinterior & region)
    where_f = stencil.cinterior2 if region is None else (stencil.cinterior2 & region)
    sup_ss = _masked_sup(resid_ss, where_ss)
    sup_fiber = _masked_sup(resid_fiber, where_f)
    return max(sup_ss, sup_fiber), sup_ss, sup_fiber


def ni_integral(c, r, det_fiber, h, b):
    """Spatial Ni integral  sum (-r)^b (c_-)^2 det(g(t)_zz) h^2  at fixed t."""
    ok = np.isfinite(c) & np.isfinite(r) & np.isfinite(det_fiber)
    c_minus = np.maximum(-c[ok], 0.0)
    return float(np.sum((-r[ok]) ** b * c_minus ** 2 * det_fiber[ok]) * h ** 2)


def growth_fit(c, r, eps_cut, min_samples=8):
    """Least-squares growth exponent of |c| ~ C (-r)^(-p) on boundary shells.

    Uses nodes with eps_cut <= -r <= 10 eps_cut.  Returns (p, C); the
    degenerate branch (|c| below 1e-8 on the shell) reports (0, 0).
    """
    neg_r = -r
    shell = np.isfinite(c) & np.isfinite(r) & (neg_r >= eps_cut) & (neg_r <= 10.0 * eps_cut)
    if int(shell.sum()) < min_samples:
        raise FiberflowError(
            f"insufficient shell samples for growth fit ({int(shell.sum())})")
    cv = np.abs(c[shell])
    if cv.max() < 1e-8:
        return 0.0, 0.0
    keep = cv > 1e-300
    logs = np.log(neg_r[shell][keep])
    design = np.column_stack([-logs, np.ones(logs.size)])
    sol, *_ = np.linalg.lstsq(design, np.log(cv[keep]), rcond=None)
    return float(sol[0]), float(np.exp(sol[1]))
