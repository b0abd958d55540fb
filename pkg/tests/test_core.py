import math

import numpy as np
import pytest

from fundgap.core import expr as ex
from fundgap.core.domain import ConvexDomain, DomainError, diameter, parse_domain
from fundgap.core.grid import DegenerateGridError, Grid, GridFunction, write_grid_csv
from fundgap.core.modulus import ModulusFn, ModulusRangeError, uniform_derivative
from fundgap.core.ode import StepSizeUnderflow, integrate, integrate_scalar
from fundgap.core.potential import (
    DoubleWellPotential,
    GridPotential,
    PotentialError,
    QuadraticPotential,
    RadialPlusTransversePotential,
    ZeroPotential,
    parse_potential,
    potential_from_text,
    require_even,
)


# -- domains -------------------------------------------------------------------


def test_diameters():
    assert diameter(ConvexDomain.square(1.0)) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert diameter(ConvexDomain.disc(1.0)) == 2.0
    assert diameter(ConvexDomain.interval(-0.5, 0.5)) == 1.0
    tri = ConvexDomain.polygon([(0, 0), (2, 0), (0, 1)])
    assert tri.diameter() == pytest.approx(math.sqrt(5))


def test_rectangle_diameter_is_norm_of_widths():
    w = (0.3, 1.7, 2.2)
    assert ConvexDomain.rectangle(w).diameter() == float(np.linalg.norm(w))


@pytest.mark.parametrize("bad", [
    lambda: ConvexDomain.interval(1, 1),
    lambda: ConvexDomain.rectangle((1.0, 0.0)),
    lambda: ConvexDomain.disc(-1.0),
    lambda: ConvexDomain.polygon([(0, 0), (0, 1), (1, 0)]),          # clockwise
    lambda: ConvexDomain.polygon([(0, 0), (1, 0), (2, 0), (1, 1)]),  # collinear triple
])
def test_domain_invariants_rejected(bad):
    with pytest.raises(DomainError):
        bad()


def test_parse_domain_forms():
    assert parse_domain("interval:-0.5,0.5").diameter() == 1.0
    assert parse_domain("rect:1x0.1").params == (1.0, 0.1)
    d = parse_domain("disc:2@1,1")
    assert d.center == (1.0, 1.0) and d.params == (2.0,)
    p = parse_domain("polygon:0,0;1,0;0,1")
    assert p.kind == "polygon"
    with pytest.raises(DomainError):
        parse_domain("ellipse:1,2")
    with pytest.raises(DomainError):
        parse_domain("disc:abc")


def test_implicit_is_signed_distance_inside():
    d = ConvexDomain.disc(1.0)
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.9]])
    assert np.allclose(d.distance_to_boundary(pts), [1.0, 0.5, 0.1])
    assert not d.contains(np.array([[1.0, 0.0]]))[0]


# -- expressions / potentials ----------------------------------------------------


def test_parse_matches_builtin_double_well():
    V = parse_potential("-1*x1^2 + 0.5*x1^4", 1)
    B = DoubleWellPotential(1.0, 0.5)
    assert V == B
    z = np.linspace(-2, 2, 9)[:, None]
    assert np.allclose(V.value(z), B.value(z), atol=1e-15)


def test_variable_beyond_dimension():
    with pytest.raises(ex.DimensionError):
        parse_potential("x3", 2)


def test_simple_evaluation():
    V = parse_potential("0.5*(x1^2 + x2^2)", 2)
    assert V.value(np.array([1.0, 1.0]))[0] == 1.0


def test_syntax_error_carries_offset_and_expected():
    with pytest.raises(ex.ExpressionSyntaxError) as info:
        parse_potential("x1 + * 2", 1)
    assert info.value.offset == 5
    assert "number" in info.value.expected


def test_unknown_identifier():
    with pytest.raises(ex.UnknownIdentifierError):
        parse_potential("y + 1", 1)
    with pytest.raises(ex.UnknownIdentifierError):
        parse_potential("tan(x1)", 1)


def test_pi_constant_and_aliases():
    node = ex.parse_expression("sin(pi*z/2)", 1, {"z": "x1"})
    f = ex.compile_vector(node)
    assert f(np.array([[1.0]]), None)[0] == pytest.approx(1.0)


def test_quadratic_values_and_gradient():
    V = QuadraticPotential(2.0, 2)
    p = np.array([[1.0, 0.0]])
    assert V.value(p)[0] == 1.0
    assert np.allclose(V.gradient(p), [[2.0, 0.0]])


def test_double_well_symmetry_point():
    V = DoubleWellPotential(1.0, 1.0)
    assert V.value(np.array([[0.0]]))[0] == 0.0
    assert V.gradient(np.array([[0.0]]))[0, 0] == 0.0


def test_central_difference_gradient():
    V = parse_potential("x1^2", 1).with_gradient_mode("central", 1e-4)
    assert V.gradient(np.array([[3.0]]))[0, 0] == pytest.approx(6.0, abs=1e-6)


def test_radial_builtin_matches_expression():
    prof = DoubleWellPotential(1.0, 1.0)
    B = RadialPlusTransversePotential(prof, 5.0, 2)
    E = parse_potential("-r^2 + r^4 + 5*x2^2", 2)
    rng = np.random.default_rng(1)
    p = rng.uniform(-0.7, 0.7, (50, 2))
    assert np.allclose(B.value(p), E.value(p), atol=1e-14)
    assert np.allclose(B.gradient(p), E.gradient(p), atol=1e-13)


def test_potential_from_text_builtins():
    assert isinstance(potential_from_text("zero", 2), ZeroPotential)
    assert isinstance(potential_from_text("quadratic:2", 1), QuadraticPotential)
    assert isinstance(potential_from_text("double-well:1,1", 1), DoubleWellPotential)
    with pytest.raises(PotentialError):
        potential_from_text("quadratic:1,2", 1)


def test_require_even():
    require_even(potential_from_text("x1^2", 1), 1.0)
    with pytest.raises(PotentialError):
        require_even(potential_from_text("x1^2 + 1e-6*x1", 1), 1.0)


def test_grid_potential_only_on_its_grid():
    g = Grid(ConvexDomain.interval(0, 1), 1 / 32)
    V = GridPotential(g, g.points[:, 0] ** 2)
    assert V.value(g.points[3:4])[0] == pytest.approx(g.points[3, 0] ** 2)
    with pytest.raises(PotentialError):
        V.value(np.array([[0.5 + 1e-3]]))


def test_pretty_print_round_trip():
    for text in ["-x1^2 + 0.5*x1^4", "sin(x1)*exp(-r) / (1 + x2^2)", "max(x1, x2, 0) - abs(x1)",
                 "-(x1 - 2)^-2", "2^3^2"]:
        node = ex.parse_expression(text, 2)
        assert ex.parse_expression(ex.to_text(node), 2) == node


def test_constant_folding():
    assert ex.parse_expression("2*3 + 1", 1) == ex.Num(7.0)


# -- grids --------------------------------------------------------------------


def test_disc_nodes_interior_and_fractions():
    g = Grid(ConvexDomain.disc(1.0), 1 / 16)
    assert np.all(np.sum(g.points ** 2, axis=1) < 1)
    assert np.all((g.theta > 0) & (g.theta <= 1))
    # the fraction lands on the circle
    a, s = 0, 1
    k = np.flatnonzero(g.theta[a, s] < 1)[0]
    p = g.points[k].copy()
    p[a] += g.theta[a, s, k] * g.h[a]
    assert np.hypot(*p) == pytest.approx(1.0, abs=1e-12)


def test_square_grid_is_regular():
    g = Grid(ConvexDomain.square(1.0), 1 / 8)
    assert g.size == 49
    assert np.all(g.theta == 1.0)


def test_degenerate_grid():
    with pytest.raises(DegenerateGridError):
        Grid(ConvexDomain.interval(0, 1), 2.0)


def test_grid_csv(tmp_path):
    g = Grid(ConvexDomain.interval(0, 1), 1 / 4)
    write_grid_csv(tmp_path / "g.csv", g, g.points[:, 0])
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x1,value" and len(lines) == 4


def test_grid_function_length_checked():
    g = Grid(ConvexDomain.interval(0, 1), 1 / 4)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(5))


# -- modulus functions ----------------------------------------------------------


def test_pole_modulus_refuses_beyond_cutoff():
    m = ModulusFn.from_function(lambda z: -math.pi * np.tan(math.pi * z), 0.5, pole=True)
    assert m.z_cut < 0.5
    assert m(0.25) == pytest.approx(-math.pi, rel=1e-9)
    with pytest.raises(ModulusRangeError):
        m(0.5)


def test_modulus_needs_two_samples_and_uniform_end():
    with pytest.raises(ValueError):
        ModulusFn(0.5, [1.0], 0.5)
    with pytest.raises(ValueError):
        ModulusFn(0.5, [0.0, 1.0, 2.0], 0.3)


def test_modulus_range_and_nan_run():
    v = np.linspace(0, 1, 11)
    v[-3:] = np.nan
    m = ModulusFn(1.0, v, 0.1)
    assert m(0.5) == pytest.approx(0.5)
    assert np.isnan(m(0.95))
    with pytest.raises(ModulusRangeError):
        m(-0.1)


def test_uniform_derivative_order():
    errs = []
    for n in (33, 65):
        z = np.linspace(0, 1, n)
        d = uniform_derivative(np.sin(3 * z), z[1] - z[0])
        errs.append(np.abs(d - 3 * np.cos(3 * z)).max())
    assert math.log2(errs[0] / errs[1]) > 5.5


# -- ODE integrator ----------------------------------------------------------------


def test_integrate_exponential_and_samples():
    s = integrate(lambda z, y: (y[0],), 0.0, (1.0,), 1.0, sample_at=[0.25, 0.5, 1.0])
    assert np.allclose(s.sample_z, [0.25, 0.5, 1.0])
    assert np.allclose(s.sample_y[:, 0], np.exp([0.25, 0.5, 1.0]), rtol=1e-9)


def test_integrate_backward_and_stop():
    s = integrate(lambda z, y: (-1.0,), 1.0, (0.0,), 0.0, stop=lambda z, y: y[0] > 0.5)
    assert s.stopped
    assert s.y[-1, 0] == pytest.approx(1.0 - s.z[-1], abs=1e-12)


def test_integrate_scalar():
    z, y, stopped = integrate_scalar(lambda z, y: math.cos(z), 0.0, 0.0, math.pi / 2)
    assert not stopped and y == pytest.approx(1.0, abs=1e-9)


def test_step_size_underflow():
    with pytest.raises(StepSizeUnderflow):
        integrate(lambda z, y: (1.0 / (1.0 - z) ** 2,), 0.0, (0.0,), 2.0, max_steps=5000)
