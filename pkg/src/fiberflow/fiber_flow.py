"""Per-fiber finite-difference solvers (fiber dimension n = 1).

The parabolic Monge-Ampere flow
    d phi/dt = log((g_zz + phi_zz)/g_zz) - (n+1) phi - F,   phi(0) = 0
is stepped explicitly (midpoint Runge-Kutta); the elliptic equation
    log((g_zz + psi_zz)/g_zz) - (n+1) psi - F = 0
is solved by damped Newton with conjugate-gradient linear solves.

Convention used everywhere: phi_zz means phi_{z z-bar} = (phi_xx + phi_yy)/4,
discretized by the 5-point stencil, i.e. lap5(phi) / (4 h^2).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import (DegenerateFamilyError, EmptyMaskError, FlowBreakdownError,
                     NonconvergenceError, StabilityError)
from .families import FamilySpec, fiber_bbox, jet_arrays, reference_arrays

DEFAULT_CFL = 0.4


def erode8(mask):
    """Nodes whose 8 neighbors (and themselves) are all inside mask."""
    ny, nx = mask.shape
    out = mask.copy()
    shifted = np.zeros_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            shifted[:] = False
            ys = slice(max(dy, 0), ny + min(dy, 0))
            yd = slice(max(-dy, 0), ny + min(-dy, 0))
            xs = slice(max(dx, 0), nx + min(dx, 0))
            xd = slice(max(-dx, 0), nx + min(-dx, 0))
            shifted[yd, xd] = mask[ys, xs]
            out &= shifted
    return out


@dataclass
class FiberGrid:
    """Truncated uniform grid on the fiber over base point s.

    mask marks nodes with r(z, s) < -eps_cut; interior nodes have all 8
    neighbors masked.  Reference data (g_zz, F, r, mixed/ss blocks) is
    precomputed at every masked node.
    """

    spec: FamilySpec
    s: complex
    h: float
    eps_cut: float
    bbox: tuple            # (x0, x1, y0, y1) actually realized by the lattice
    x: np.ndarray          # (nx,)
    y: np.ndarray          # (ny,)
    mask: np.ndarray       # (ny, nx) bool
    interior: np.ndarray   # (ny, nx) bool
    ring: np.ndarray       # (ny, nx) bool  (mask & ~interior)
    r: np.ndarray          # (ny, nx), NaN off mask
    g_zz: np.ndarray       # (ny, nx) fiber metric coefficient of the reference form
    g_zs: np.ndarray       # (ny, nx) complex, g_{z s-bar} of the reference form
    g_ss: np.ndarray       # (ny, nx) g_{s s-bar} of the reference form
    F: np.ndarray          # (ny, nx) F-density
    grad_norm_sq: np.ndarray
    # packed interior data
    iC: np.ndarray = field(repr=False, default=None)   # flat indices of interior nodes
    iN: np.ndarray = field(repr=False, default=None)
    iS: np.ndarray = field(repr=False, default=None)
    iE: np.ndarray = field(repr=False, default=None)
    iW: np.ndarray = field(repr=False, default=None)
    g_int: np.ndarray = field(repr=False, default=None)  # g_zz at interior nodes
    F_int: np.ndarray = field(repr=False, default=None)
    i_ring: np.ndarray = field(repr=False, default=None)
    F_ring: np.ndarray = field(repr=False, default=None)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def n_plus_1(self):
        return self.spec.fiber_dim + 1

    def node_count(self):
        return int(self.mask.sum())

    def geometry_key(self):
        """Tuple identifying the discrete geometry (for snapshot hashing)."""
        return (self.spec.kind, self.spec.fiber_dim, self.spec.hartogs_lambda,
                tuple(self.spec.coefficients), complex(self.s), self.h, self.eps_cut,
                tuple(round(v, 12) for v in self.bbox))


@dataclass
class FlowState:
    """Potential field phi(t) on a FiberGrid."""

    t: float
    phi: np.ndarray        # (ny, nx), meaningful on grid.mask
    dt_last: float = 0.0
    breakdown_flag: bool = False

    def copy(self):
        return FlowState(t=self.t, phi=self.phi.copy(), dt_last=self.dt_last,
                         breakdown_flag=self.breakdown_flag)


def build_grid(spec: FamilySpec, s, h, eps_cut, bbox=None, pad=None) -> FiberGrid:
    """Build the truncated grid {r(z, s) < -eps_cut} with precomputed reference data."""
    if h <= 0 or eps_cut <= 0:
        raise ValueError("h and eps_cut must be positive")
    s = complex(s)
    if bbox is None:
        bbox = fiber_bbox(spec, s, pad=(2 * h if pad is None else pad))
    x0, x1, y0, y1 = bbox
    nx = int(np.floor((x1 - x0) / h)) + 1
    ny = int(np.floor((y1 - y0) / h)) + 1
    x = x0 + h * np.arange(nx)
    y = y0 + h * np.arange(ny)
    X, Y = np.meshgrid(x, y)
    Z = (X + 1j * Y)[..., None]

    r_full, *_ = jet_arrays(spec, Z, s)
    r_full = np.real(r_full)
    mask = r_full < -eps_cut
    if not mask.any():
        raise EmptyMaskError(
            f"eps_cut = {eps_cut} truncates the whole fiber over s = {s}")

    interior = erode8(mask)

    ref = reference_arrays(spec, Z[mask], s)
    def scatter(vals, dtype=float):
        out = np.full((ny, nx), np.nan, dtype=dtype)
        out[mask] = vals
        return out

    g_zz = scatter(np.real(ref["g_fiber"][..., 0, 0]))
    if np.any(g_zz[mask] <= 0):
        raise DegenerateFamilyError("reference fiber metric not positive on the mask")

    grid = FiberGrid(
        spec=spec, s=s, h=h, eps_cut=eps_cut,
        bbox=(x[0], x[-1], y[0], y[-1]), x=x, y=y,
        mask=mask, interior=interior, ring=mask & ~interior,
        r=scatter(ref["r"]), g_zz=g_zz,
        g_zs=scatter(ref["g_mixed"][..., 0], dtype=complex),
        g_ss=scatter(ref["g_ss"]), F=scatter(ref["F"]),
        grad_norm_sq=scatter(ref["grad_norm_sq"]),
    )

    flat = np.flatnonzero(interior.ravel())
    grid.iC = flat
    grid.iN = flat + nx
    grid.iS = flat - nx
    grid.iE = flat + 1
    grid.iW = flat - 1
    grid.g_int = grid.g_zz.ravel()[flat]
    grid.F_int = grid.F.ravel()[flat]
    grid.i_ring = np.flatnonzero(grid.ring.ravel())
    grid.F_ring = grid.F.ravel()[grid.i_ring]
    return grid


def boundary_closure(grid: FiberGrid, t):
    """Ring values: the ODE limit phi_bc(t) = -F (1 - e^{-(n+1)t}) / (n+1)."""
    k = grid.n_plus_1
    return -grid.F_ring * (1.0 - np.exp(-k * t)) / k


def _rhs_packed(grid: FiberGrid, p_flat):
    """RHS at interior nodes for the flat phi array; also ratio extremes."""
    lap = (p_flat[grid.iN] + p_flat[grid.iS] + p_flat[grid.iE] + p_flat[grid.iW]
           - 4.0 * p_flat[grid.iC])
    ratio = 1.0 + lap / (4.0 * grid.h ** 2 * grid.g_int)
    rmin = float(ratio.min()) if ratio.size else 1.0
    if rmin <= 0.0:
        worst = int(grid.iC[int(np.argmin(ratio))])
        raise FlowBreakdownError(
            f"evolved fiber metric lost positivity (ratio {rmin:.3e} at flat node {worst})",
            worst_node=np.unravel_index(worst, grid.shape), worst_value=rmin)
    rhs = np.log(ratio) - grid.n_plus_1 * p_flat[grid.iC] - grid.F_int
    return rhs, rmin, float(ratio.max()) if ratio.size else 1.0


def ma_rhs(grid: FiberGrid, phi):
    """Pointwise parabolic right-hand side on interior nodes (0 elsewhere)."""
    rhs, _, _ = _rhs_packed(grid, np.asarray(phi, dtype=float).ravel())
    out = np.zeros(grid.shape)
    out.ravel()[grid.iC] = rhs
    return out


def dt_stable(grid: FiberGrid, phi, c_cfl=DEFAULT_CFL):
    """Parabolic CFL bound c_cfl * h^2 / (4 * max over interior of g(t)^{zz}).

    The hard stability limit of the explicit midpoint scheme corresponds to
    c_cfl = 4; the default keeps a 10x margin.
    """
    p = np.asarray(phi, dtype=float).ravel()
    lap = (p[grid.iN] + p[grid.iS] + p[grid.iE] + p[grid.iW] - 4.0 * p[grid.iC])
    g_t = grid.g_int + lap / (4.0 * grid.h ** 2)
    g_t = g_t[g_t > 0]
    if g_t.size == 0:
        raise FlowBreakdownError("evolved fiber metric nonpositive on all interior nodes")
    max_inv = float((1.0 / g_t).max())
    return c_cfl * grid.h ** 2 / (4.0 * max_inv)


def step(state: FlowState, grid: FiberGrid, dt) -> FlowState:
    """One explicit midpoint step; ring nodes follow the boundary closure."""
    if dt > dt_stable(grid, state.phi, c_cfl=4.0) * (1.0 + 1e-9):
        raise StabilityError(f"dt = {dt:.3e} above the stability bound")
    t = state.t
    p = state.phi.ravel().copy()
    p[grid.i_ring] = boundary_closure(grid, t)
    k1, _, _ = _rhs_packed(grid, p)
    p_half = p.copy()
    p_half[grid.iC] += 0.5 * dt * k1
    p_half[grid.i_ring] = boundary_closure(grid, t + 0.5 * dt)
    k2, _, _ = _rhs_packed(grid, p_half)
    p_new = p
    p_new[grid.iC] += dt * k2
    p_new[grid.i_ring] = boundary_closure(grid, t + dt)
    return FlowState(t=t + dt, phi=p_new.reshape(grid.shape), dt_last=dt)


@dataclass
class FlowResult:
    """Trajectory snapshots plus per-snapshot decay diagnostics."""

    snapshots: list                 # list of FlowState at the requested times
    records: list                   # dicts: t, sup_phidot, decay_product, sup_F
    ratio_min: float                # quasi-isometry extremes along the whole flow
    ratio_max: float
    breakdown: bool = False
    message: str = ""

    @property
    def quasi_iso_constant(self):
        return max(self.ratio_max, 1.0 / self.ratio_min)


def initial_state(grid: FiberGrid) -> FlowState:
    return FlowState(t=0.0, phi=np.zeros(grid.shape))


def _snapshot_record(grid, state):
    p = state.phi.ravel().copy()
    p[grid.i_ring] = boundary_closure(grid, state.t)
    rhs, rmin, rmax = _rhs_packed(grid, p)
    k = grid.n_plus_1
    ring_dot = np.abs(grid.F_ring) * np.exp(-k * state.t)
    sup_dot = max(float(np.abs(rhs).max()) if rhs.size else 0.0,
                  float(ring_dot.max()) if ring_dot.size else 0.0)
    sup_f = float(np.nanmax(np.abs(grid.F[grid.mask])))
    return ({"t": state.t, "sup_phidot": sup_dot,
             "decay_product": np.exp(k * state.t) * sup_dot, "sup_F": sup_f},
            rmin, rmax)


def solve_flow(grid: FiberGrid, t_final, snapshot_times=(), c_cfl=DEFAULT_CFL,
               start_state: FlowState = None) -> FlowResult:
    """Integrate the flow, landing exactly on every requested snapshot time."""
    state = initial_state(grid) if start_state is None else start_state.copy()
    targets = sorted({float(t) for t in snapshot_times if t >= state.t - 1e-14}
                     | {float(t_final)})
    snaps, records = [], []
    rmin_all, rmax_all = np.inf, -np.inf
    try:
        for target in targets:
            while state.t < target - 1e-14:
                dt = min(dt_stable(grid, state.phi, c_cfl), target - state.t)
                state = step(state, grid, dt)
            state.t = target
            snaps.append(state.copy())
            rec, rmin, rmax = _snapshot_record(grid, state)
            records.append(rec)
            rmin_all, rmax_all = min(rmin_all, rmin), max(rmax_all, rmax)
    except FlowBreakdownError as exc:
        state.breakdown_flag = True
        snaps.append(state.copy())
        return FlowResult(snapshots=snaps, records=records,
                          ratio_min=min(rmin_all, 1.0), ratio_max=max(rmax_all, 1.0),
                          breakdown=True, message=str(exc))
    return FlowResult(snapshots=snaps, records=records,
                      ratio_min=min(rmin_all, 1.0), ratio_max=max(rmax_all, 1.0))


@dataclass
class NewtonResult:
    psi: np.ndarray
    residual_sup: float
    iterations: int
    history: list
    ratio_min: float
    ratio_max: float

    @property
    def quasi_iso_constant(self):
        return max(self.ratio_max, 1.0 / self.ratio_min)


def _newton_residual(grid, p_flat):
    lap = (p_flat[grid.iN] + p_flat[grid.iS] + p_flat[grid.iE] + p_flat[grid.iW]
           - 4.0 * p_flat[grid.iC])
    w = grid.g_int + lap / (4.0 * grid.h ** 2)
    if w.size and w.min() <= 0.0:
        return None, w
    res = np.log(w / grid.g_int) - grid.n_plus_1 * p_flat[grid.iC] - grid.F_int
    return res, w


def newton_ke(grid: FiberGrid, tol=1e-10, max_iter=30) -> NewtonResult:
    """Damped Newton solve of the elliptic Monge-Ampere equation.

    Ring nodes carry the Dirichlet value -F/(n+1) (the boundary closure at
    t = infinity); the linearized operator is symmetrized by the evolved
    metric weight and solved by preconditioned conjugate gradients.
    """
    k = grid.n_plus_1
    h2 = grid.h ** 2
    m = grid.iC.size
    psi = np.zeros(grid.shape).ravel()
    psi[grid.i_ring] = -grid.F_ring / k
    psi[grid.iC] = -grid.F_int / k

    # local packed neighbor indices; index m is a zero Dirichlet slot
    lookup = np.full(grid.mask.size, m, dtype=np.int64)
    lookup[grid.iC] = np.arange(m)
    nbrs = [lookup[idx] for idx in (grid.iN, grid.iS, grid.iE, grid.iW)]

    res, w = _newton_residual(grid, psi)
    if res is None:
        raise NonconvergenceError("initial Newton iterate has nonpositive metric")
    sup = float(np.abs(res).max()) if m else 0.0
    history = [sup]
    iters = 0
    while sup > tol and iters < max_iter:
        weight = w.copy()

        def matvec(v):
            vv = np.append(v, 0.0)
            lap_v = vv[nbrs[0]] + vv[nbrs[1]] + vv[nbrs[2]] + vv[nbrs[3]] - 4.0 * v
            return k * weight * v - lap_v / (4.0 * h2)

        diag = k * weight + 1.0 / h2
        op = LinearOperator((m, m), matvec=matvec)
        pre = LinearOperator((m, m), matvec=lambda v: v / diag)
        delta, info = cg(op, weight * res, rtol=1e-12, atol=0.0, maxiter=20000, M=pre)
        if info != 0:
            raise NonconvergenceError(f"inner CG solve failed (info = {info})",
                                      history=history)
        alpha = 1.0
        while True:
            cand = psi.copy()
            cand[grid.iC] += alpha * delta
            res_new, w_new = _newton_residual(grid, cand)
            if res_new is not None:
                sup_new = float(np.abs(res_new).max()) if m else 0.0
                if sup_new <= (1.0 - 1e-4 * alpha) * sup or sup_new <= tol:
                    break
            alpha *= 0.5
            if alpha < 1e-10:
                raise NonconvergenceError("Newton line search exhausted", history=history)
        psi, res, w, sup = cand, res_new, w_new, sup_new
        history.append(sup)
        iters += 1
    if sup > tol:
        raise NonconvergenceError(
            f"Newton did not reach tolerance {tol:.1e} (residual {sup:.3e})",
            history=history)
    ratio = w / grid.g_int
    return NewtonResult(psi=psi.reshape(grid.shape), residual_sup=sup,
                        iterations=iters, history=history,
                        ratio_min=float(ratio.min()) if m else 1.0,
                        ratio_max=float(ratio.max()) if m else 1.0)
