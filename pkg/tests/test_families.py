import numpy as np
import pytest

from fiberflow.errors import (ConfigurationError, DegenerateFamilyError,
                              OutsideDomainError)
from fiberflow.families import (FamilySpec, F_density, eval_jet, fiber_bbox,
                                jet_arrays, reference_arrays, reference_form)

# a defining function with genuinely s-dependent F:
# r = |z|^2 - 1 + 0.1 |z|^4 + 0.2 Re(z s) ... written in monomial form
POLY_COEFFS = (
    ((1, 1, 0, 0), 1.0),
    ((0, 0, 0, 0), -1.0),
    ((2, 2, 0, 0), 0.1),
    ((1, 0, 0, 1), 0.1),
    ((0, 1, 1, 0), 0.1),
)
POLY = FamilySpec(kind="polynomial", coefficients=POLY_COEFFS,
                  bbox=(-1.2, 1.2, -1.2, 1.2))

ALL_SPECS = [
    FamilySpec(kind="product_disc"),
    FamilySpec(kind="unit_ball"),
    FamilySpec(kind="translated_disc"),
    FamilySpec(kind="hartogs", hartogs_lambda=1.3),
    POLY,
]


def numeric_jet(spec, z, s, step=1e-4):
    """Second-order finite differences of r for a single fiber coordinate."""
    def r(zz, ss):
        out, *_ = jet_arrays(spec, np.array([zz]), ss)
        return float(np.real(out))

    h = step

    def d_z(f, zz, ss):
        return ((f(zz + h, ss) - f(zz - h, ss))
                - 1j * (f(zz + 1j * h, ss) - f(zz - 1j * h, ss))) / (4 * h)

    r_z = d_z(r, z, s)
    r_s = ((r(z, s + h) - r(z, s - h)) - 1j * (r(z, s + 1j * h) - r(z, s - 1j * h))) / (4 * h)
    r_zzbar = (r(z + h, s) + r(z - h, s) + r(z + 1j * h, s) + r(z - 1j * h, s)
               - 4 * r(z, s)) / (4 * h ** 2)
    r_ssbar = (r(z, s + h) + r(z, s - h) + r(z, s + 1j * h) + r(z, s - 1j * h)
               - 4 * r(z, s)) / (4 * h ** 2)
    r_zsbar = ((d_z(r, z, s + h) - d_z(r, z, s - h))
               + 1j * (d_z(r, z, s + 1j * h) - d_z(r, z, s - 1j * h))) / (4 * h)
    return r_z, r_s, r_zzbar, r_zsbar, r_ssbar


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_jet_matches_finite_differences(spec):
    rng = np.random.default_rng(5)
    for _ in range(10):
        s = 0.3 * (rng.normal() + 1j * rng.normal())
        z = 0.3 * (rng.normal() + 1j * rng.normal())
        if spec.kind == "translated_disc":
            z = z + s
        jet = eval_jet(spec, z, s)
        r_z, r_s, r_zzbar, r_zsbar, r_ssbar = numeric_jet(spec, z, s)
        assert jet.r_alpha[0] == pytest.approx(r_z, abs=1e-8)
        assert jet.r_s == pytest.approx(r_s, abs=1e-8)
        assert jet.r_fiber_hess[0, 0] == pytest.approx(r_zzbar, abs=1e-6)
        assert jet.r_alpha_sbar[0] == pytest.approx(r_zsbar, abs=1e-6)
        assert jet.r_ssbar == pytest.approx(r_ssbar, abs=1e-6)


def test_reference_form_is_hessian_of_potential():
    # g = -log(-r): compare the assembled block with finite differences of g
    spec = FamilySpec(kind="hartogs", hartogs_lambda=0.8)
    z, s = 0.4 + 0.2j, 0.3 - 0.1j

    def g(zz, ss):
        out, *_ = jet_arrays(spec, np.array([zz]), ss)
        return float(-np.log(-np.real(out)))

    h = 1e-4
    g_zz = (g(z + h, s) + g(z - h, s) + g(z + 1j * h, s) + g(z - 1j * h, s)
            - 4 * g(z, s)) / (4 * h ** 2)
    g_ss = (g(z, s + h) + g(z, s - h) + g(z, s + 1j * h) + g(z, s - 1j * h)
            - 4 * g(z, s)) / (4 * h ** 2)
    data = reference_form(eval_jet(spec, z, s))
    assert data.form.fiber_block[0, 0].real == pytest.approx(g_zz, rel=1e-6)
    assert data.form.ss == pytest.approx(g_ss, rel=1e-6)
    assert data.g_potential == pytest.approx(g(z, s))


def test_F_density_unit_ball_closed_form():
    spec = FamilySpec(kind="unit_ball")
    for s in (0.0, 0.3 + 0.1j, 0.6j):
        jet = eval_jet(spec, 0.2, s)
        assert F_density(jet) == pytest.approx(-np.log(1 - abs(s) ** 2), abs=1e-13)


def test_F_density_constant_on_hartogs_fibers():
    spec = FamilySpec(kind="hartogs", hartogs_lambda=2.0)
    s = 0.35 - 0.2j
    values = [F_density(eval_jet(spec, z, s)) for z in (0.0, 0.2, 0.1 + 0.3j)]
    assert np.ptp(values) < 1e-13
    assert values[0] == pytest.approx(2.0 * abs(s) ** 2, abs=1e-13)


def test_polynomial_F_depends_on_z():
    values = [F_density(eval_jet(POLY, z, 0.2)) for z in (0.0, 0.4, 0.5j)]
    assert np.ptp(values) > 1e-3


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_grad_norm_sq_bounded_by_one(spec):
    rng = np.random.default_rng(9)
    for _ in range(50):
        s = 0.3 * (rng.normal() + 1j * rng.normal())
        z = 0.5 * (rng.normal() + 1j * rng.normal())
        if spec.kind == "translated_disc":
            z = z + s
        jet = eval_jet(spec, z, s)
        if jet.r >= 0:
            continue
        data = reference_form(jet)
        assert 0.0 <= data.grad_norm_sq <= 1.0 + 1e-12


def test_outside_domain_raises():
    spec = FamilySpec(kind="unit_ball")
    with pytest.raises(OutsideDomainError):
        reference_form(eval_jet(spec, 1.5, 0.0))
    with pytest.raises(OutsideDomainError):
        reference_arrays(spec, np.array([[0.1], [2.0]]), 0.0)


def test_unit_ball_two_fiber_dims():
    # the pointwise evaluators support n = 2
    spec = FamilySpec(kind="unit_ball", fiber_dim=2)
    jet = eval_jet(spec, [0.2, 0.1 - 0.2j], 0.3)
    data = reference_form(jet)
    D = 1 - 0.04 - abs(0.1 - 0.2j) ** 2 - 0.09
    assert data.g_potential == pytest.approx(-np.log(D))
    # F = -log(1 - |s|^2) in every dimension for the ball
    assert data.F == pytest.approx(-np.log(1 - 0.09), abs=1e-12)


def test_reality_constraint_enforced():
    with pytest.raises(ConfigurationError, match="reality"):
        FamilySpec(kind="polynomial", coefficients=(((1, 0, 0, 0), 1.0),),
                   bbox=(-1, 1, -1, 1))


def test_polynomial_requires_bbox():
    with pytest.raises(ConfigurationError, match="bbox"):
        FamilySpec(kind="polynomial", coefficients=POLY_COEFFS)


def test_unknown_kind_rejected():
    with pytest.raises(ConfigurationError):
        FamilySpec(kind="torus")


def test_fiber_bbox_contains_fiber():
    spec = FamilySpec(kind="hartogs", hartogs_lambda=1.0)
    s = 0.5
    x0, x1, y0, y1 = fiber_bbox(spec, s)
    rad = np.exp(-0.125)
    assert x0 <= -rad and x1 >= rad and y0 <= -rad and y1 >= rad


def test_empty_fiber_raises():
    with pytest.raises(OutsideDomainError):
        fiber_bbox(FamilySpec(kind="unit_ball"), 1.2)


def test_degenerate_family_detected():
    # concave "defining function" has a negative fiber Hessian
    bad = FamilySpec(kind="polynomial",
                     coefficients=(((1, 1, 0, 0), -1.0), ((0, 0, 0, 0), -1.0)),
                     bbox=(-1, 1, -1, 1))
    with pytest.raises(DegenerateFamilyError):
        reference_form(eval_jet(bad, 0.1, 0.0))
