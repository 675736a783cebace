"""Closed-form ground truth for the built-in analytic families (n = 1).

Each case bundles mutually consistent callables: the potential g(z, s),
its second-derivative components, the F-density, the flow potential phi(t),
the limit potential psi, the geodesic curvature and the lift coefficient.
self_check re-verifies every hand-derived formula numerically, so no
derivation error can silently become ground truth.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OracleDefectError
from .forms import HermitianForm, geodesic_curvature

ORACLE_KINDS = ("product_disc", "unit_ball", "translated_disc",
                "hartogs", "hartogs_central_fiber")


@dataclass
class OracleCase:
    kind: str
    potential: Callable        # g(z, s)
    g_zz: Callable
    g_zs: Callable             # g_{z s-bar}
    g_ss: Callable
    F: Callable
    c0: Callable               # geodesic curvature of the reference form
    c_t: Callable              # c(omega(t))(z, s, t)
    phi: Callable              # flow potential phi(z, s, t)
    psi: Callable              # Kahler-Einstein potential
    lift: Callable             # fiber coefficient of the horizontal lift
    sample: Callable           # rng -> (z, s) interior point with margin

    def form_at(self, z, s) -> HermitianForm:
        return HermitianForm(n=1, fiber_block=[[self.g_zz(z, s)]],
                             mixed=[self.g_zs(z, s)], ss=self.g_ss(z, s))


def _disc_point(rng, radius):
    rho = radius * np.sqrt(rng.uniform())
    theta = rng.uniform(0, 2 * np.pi)
    return rho * np.exp(1j * theta)


def oracle(kind, lam=1.0) -> OracleCase:
    """Closed forms for the requested family."""
    if kind == "product_disc":
        return OracleCase(
            kind=kind,
            potential=lambda z, s: -np.log(1 - abs(z) ** 2),
            g_zz=lambda z, s: 1.0 / (1 - abs(z) ** 2) ** 2,
            g_zs=lambda z, s: 0j,
            g_ss=lambda z, s: 0.0,
            F=lambda z, s: 0.0,
            c0=lambda z, s: 0.0,
            c_t=lambda z, s, t: 0.0,
            phi=lambda z, s, t: 0.0,
            psi=lambda z, s: 0.0,
            lift=lambda z, s: 0j,
            sample=lambda rng: (_disc_point(rng, np.sqrt(0.85)), _disc_point(rng, 0.5)),
        )

    if kind == "unit_ball":
        def D(z, s):
            return 1 - abs(z) ** 2 - abs(s) ** 2

        def a(s):
            return 1 - abs(s) ** 2

        def sample(rng):
            s = _disc_point(rng, 0.6)
            z = _disc_point(rng, np.sqrt(max(0.9 - abs(s) ** 2, 0.05)))
            return z, s

        return OracleCase(
            kind=kind,
            potential=lambda z, s: -np.log(D(z, s)),
            g_zz=lambda z, s: a(s) / D(z, s) ** 2,
            g_zs=lambda z, s: np.conj(z) * s / D(z, s) ** 2,
            g_ss=lambda z, s: (1 - abs(z) ** 2) / D(z, s) ** 2,
            F=lambda z, s: -np.log(a(s)),
            c0=lambda z, s: 1.0 / (D(z, s) * a(s)),
            c_t=lambda z, s, t: 1.0 / (D(z, s) * a(s))
            - (1 - np.exp(-2 * t)) / (2 * a(s) ** 2),
            phi=lambda z, s, t: np.log(a(s)) * (1 - np.exp(-2 * t)) / 2,
            psi=lambda z, s: np.log(a(s)) / 2,
            lift=lambda z, s: -np.conj(s) * z / a(s),
            sample=sample,
        )

    if kind == "translated_disc":
        def Du(z, s):
            return 1 - abs(z - s) ** 2

        def sample(rng):
            s = _disc_point(rng, 0.5)
            return s + _disc_point(rng, np.sqrt(0.85)), s

        return OracleCase(
            kind=kind,
            potential=lambda z, s: -np.log(Du(z, s)),
            g_zz=lambda z, s: 1.0 / Du(z, s) ** 2,
            g_zs=lambda z, s: -1.0 / Du(z, s) ** 2 + 0j,
            g_ss=lambda z, s: 1.0 / Du(z, s) ** 2,
            F=lambda z, s: 0.0,
            c0=lambda z, s: 0.0,
            c_t=lambda z, s, t: 0.0,
            phi=lambda z, s, t: 0.0,
            psi=lambda z, s: 0.0,
            lift=lambda z, s: 1.0 + 0j,
            sample=sample,
        )

    if kind in ("hartogs", "hartogs_central_fiber"):
        central = kind == "hartogs_central_fiber"

        def E(s):
            return np.exp(-lam * abs(s) ** 2)

        def D(z, s):
            return E(s) - abs(z) ** 2

        def g_ss(z, s):
            e, d = E(s), D(z, s)
            return lam * e / d - lam ** 2 * abs(s) ** 2 * e / d \
                + lam ** 2 * abs(s) ** 2 * e ** 2 / d ** 2

        def sample(rng):
            s = 0j if central else _disc_point(rng, 0.6)
            z = _disc_point(rng, np.sqrt(max(E(s) - 0.08, 0.05)))
            return z, s

        return OracleCase(
            kind=kind,
            potential=lambda z, s: -np.log(D(z, s)),
            g_zz=lambda z, s: E(s) / D(z, s) ** 2,
            g_zs=lambda z, s: lam * s * np.conj(z) * E(s) / D(z, s) ** 2,
            g_ss=g_ss,
            F=lambda z, s: lam * abs(s) ** 2,
            c0=lambda z, s: lam * E(s) / D(z, s),
            c_t=lambda z, s, t: lam * E(s) / D(z, s) - lam * (1 - np.exp(-2 * t)) / 2,
            phi=lambda z, s, t: -lam * abs(s) ** 2 * (1 - np.exp(-2 * t)) / 2,
            psi=lambda z, s: -lam * abs(s) ** 2 / 2,
            lift=lambda z, s: -lam * np.conj(s) * z,
            sample=sample,
        )

    raise OracleDefectError(f"unknown oracle kind {kind!r}")


def _fd_second_block(g, z, s, step=3e-4):
    """Finite-difference g_zz, g_zs-bar, g_ss-bar of a potential callable.

    Fourth-order central differences keep the truncation error well below
    the 1e-6 relative gate even close to the domain boundary.
    """
    h = step

    def d2(f):
        # (f_xx + f_yy) / 4 by the 4th-order 5-point formula per axis
        total = 0.0
        for e in (1.0, 1j):
            total += (-f(2 * h * e) + 16 * f(h * e) - 30 * f(0)
                      + 16 * f(-h * e) - f(-2 * h * e)) / (12 * h ** 2)
        return total / 4.0

    def d1(f, e):
        return (-f(2 * h * e) + 8 * f(h * e) - 8 * f(-h * e) + f(-2 * h * e)) / (12 * h)

    g_zz = d2(lambda dz: g(z + dz, s))
    g_ss = d2(lambda ds: g(z, s + ds))

    def gz(ss):
        return 0.5 * (d1(lambda dz: g(z + dz, ss), 1.0)
                      - 1j * d1(lambda dz: g(z + dz, ss), 1j))

    g_zs = 0.5 * (d1(lambda ds: gz(s + ds), 1.0) + 1j * d1(lambda ds: gz(s + ds), 1j))
    return g_zz, g_zs, g_ss


def self_check(case: OracleCase, n_points=500, seed=0, fd_rel_tol=1e-6, c_tol=1e-10):
    """Verify metric callables against finite differences of the potential and
    the c callable against the Schur-complement formula.  Raises OracleDefectError."""
    rng = np.random.default_rng(seed)
    worst_fd, worst_c = 0.0, 0.0
    for _ in range(n_points):
        z, s = case.sample(rng)
        fd_zz, fd_zs, fd_ss = _fd_second_block(case.potential, z, s)
        scale = 1.0 + abs(fd_zz) + abs(fd_zs) + abs(fd_ss)
        gap = max(abs(case.g_zz(z, s) - fd_zz), abs(case.g_zs(z, s) - fd_zs),
                  abs(case.g_ss(z, s) - fd_ss)) / scale
        worst_fd = max(worst_fd, gap)
        c_schur = geodesic_curvature(case.form_at(z, s))
        worst_c = max(worst_c, abs(case.c0(z, s) - c_schur))
    if worst_fd > fd_rel_tol:
        raise OracleDefectError(
            f"{case.kind}: metric disagrees with finite differences (rel {worst_fd:.3e})")
    if worst_c > c_tol:
        raise OracleDefectError(
            f"{case.kind}: c formula disagrees with Schur complement ({worst_c:.3e})")
    return {"kind": case.kind, "n_points": n_points,
            "max_fd_rel_error": worst_fd, "max_c_error": worst_c}
