import math

import numpy as np
import pytest

from fundgap.core.domain import ConvexDomain
from fundgap.core.grid import Grid, GridFunction
from fundgap.core.modulus import ModulusFn
from fundgap.core.potential import (
    DoubleWellPotential,
    QuadraticPotential,
    RadialPlusTransversePotential,
    ZeroPotential,
    parse_potential,
)
from fundgap.moduli import (
    ModulusPoleError,
    NonPositiveError,
    PairSample,
    calibrate_c_tol,
    check_contraction_modulus,
    check_convexity_modulus,
    check_log_concavity,
    check_modulus_of_continuity,
    grad_log,
    optimal_convexity_modulus,
)
from fundgap.schrod_nd import fundamental_gap
from fundgap.sturm1d import log_derivative, solve_eigen_shooting


def fn(f, half, **kw):
    return ModulusFn.from_function(f, half, **kw)


def linear(c, half):
    return fn(lambda z: c * z, half)



@pytest.fixture(scope="module")
def square_grid():
    return Grid(ConvexDomain.square(1.0), 1 / 16)


@pytest.fixture(scope="module")
def square_phi0():
    return fundamental_gap(ConvexDomain.square(1.0), ZeroPotential(2), 1 / 32, richardson=False).phi0


def interval_points(n=101):
    return np.linspace(-0.5, 0.5, n)[1:-1, None]


# -- pair sampling ------------------------------------------------------------------


def test_stratified_sample_is_deterministic_and_interior(square_grid):
    D = math.sqrt(2)
    a = PairSample.stratified(square_grid.points, D, bins=16, per_bin=64, seed=5)
    b = PairSample.stratified(square_grid.points, D, bins=16, per_bin=64, seed=5)
    assert np.array_equal(a.i, b.i) and np.array_equal(a.j, b.j)
    d, _ = a.geometry()
    assert np.all((d > 0) & (d < D))
    # every bin some pair can reach is filled, the others stay empty
    reachable = PairSample.all_pairs(square_grid.points, D, bins=16).bin_counts()
    assert a.bin_counts() == [64 if c else 0 for c in reachable]


def test_stratified_covers_near_diameter(square_grid):
    D = math.sqrt(2)
    s = PairSample.stratified(square_grid.points, D, bins=32, per_bin=32)
    reachable = PairSample.all_pairs(square_grid.points, D, bins=32).bin_counts()
    last = max(b for b, c in enumerate(reachable) if c)
    assert s.bin_counts()[last] == 32


def test_pairs_must_be_distinct():
    with pytest.raises(ValueError):
        PairSample(np.zeros((2, 1)), [0], [0], np.array([0.0, 1.0]))


def test_union_requires_same_points():
    p = interval_points()
    a = PairSample.all_pairs(p, 1.0)
    with pytest.raises(ValueError):
        a.union(PairSample.all_pairs(p + 1.0, 1.0))
    assert len(a.union(a)) == 2 * len(a)


# -- continuity -----------------------------------------------------------------------


def test_continuity_constant():
    p = interval_points()
    r = check_modulus_of_continuity(np.ones(len(p)), linear(0.0, 0.5), PairSample.all_pairs(p, 1.0))
    assert r.passed and r.worst == 0.0


def test_continuity_identity_equality():
    p = interval_points()
    r = check_modulus_of_continuity(p[:, 0], linear(1.0, 0.5), PairSample.all_pairs(p, 1.0))
    assert r.passed and abs(r.worst) < 1e-14


def test_continuity_half_slope_fails():
    p = np.linspace(-0.5, 0.5, 101)[:, None]
    r = check_modulus_of_continuity(p[:, 0], linear(0.5, 0.5), PairSample.all_pairs(p, 1.0))
    assert not r.passed
    assert r.worst == pytest.approx(0.5)


def test_continuity_length_checked():
    p = interval_points()
    with pytest.raises(ValueError):
        check_modulus_of_continuity(np.ones(3), linear(0.0, 0.5), PairSample.all_pairs(p, 1.0))


# -- contraction ----------------------------------------------------------------------


def test_contraction_zero_field():
    p = interval_points()
    r = check_contraction_modulus(np.zeros((len(p), 1)), linear(0.0, 0.5), PairSample.all_pairs(p, 1.0))
    assert r.passed and r.worst == 0.0


def test_contraction_expanding_field_fails():
    p = np.linspace(-0.5, 0.5, 101)[:, None]
    r = check_contraction_modulus(p, linear(0.0, 0.5), PairSample.all_pairs(p, 1.0))
    assert not r.passed and r.worst == pytest.approx(1.0)


def test_contraction_grad_log_square(square_phi0):
    g = square_phi0.grid
    X = grad_log(square_phi0)
    near = g.boundary_distance <= 2 * g.h[0] * (1 + 1e-9)
    X[near] = np.nan
    om = log_derivative(solve_eigen_shooting(ZeroPotential(1), math.sqrt(2)))
    pairs = PairSample.stratified(g.points, math.sqrt(2), bins=16, per_bin=128)
    r = check_contraction_modulus(X, om, pairs, tol=0.05 * g.h[0])
    assert r.passed
    assert r.extra == {} and r.skipped["undefined_field"] > 0


# -- convexity ----------------------------------------------------------------------


def test_convexity_zero():
    p = interval_points()
    r = check_convexity_modulus(ZeroPotential(1), linear(0.0, 0.5), PairSample.all_pairs(p, 1.0))
    assert r.passed and r.worst == 0.0


def test_convexity_harmonic_equality_and_failure(square_grid):
    K = 3.0
    V = QuadraticPotential(K, 2)
    pairs = PairSample.stratified(square_grid.points, math.sqrt(2), bins=16, per_bin=64)
    r = check_convexity_modulus(V, linear(K, math.sqrt(2) / 2), pairs)
    assert r.passed and r.worst <= 1e-10
    bad = check_convexity_modulus(V, linear(K + 0.1, math.sqrt(2) / 2), pairs)
    d, _ = pairs.geometry()
    assert not bad.passed
    assert bad.worst == pytest.approx(0.1 * d.max(), rel=1e-9)


def test_convexity_pole_beyond_range():
    p = interval_points()
    psi = fn(lambda z: -math.pi * np.tan(math.pi * z / 0.8), 0.4, pole=True)
    with pytest.raises(ModulusPoleError):
        check_convexity_modulus(ZeroPotential(1), psi, PairSample.all_pairs(p, 1.0))


def test_optimal_modulus_harmonic(square_grid):
    K = 2.0
    pairs = PairSample.stratified(square_grid.points, math.sqrt(2), bins=16, per_bin=64)
    mod, missing = optimal_convexity_modulus(QuadraticPotential(K, 2), math.sqrt(2) / 2, 33, pairs)
    ok = ~np.isnan(mod.values)
    assert np.allclose(mod.values[ok], K * mod.z[ok], atol=K * mod.dz)
    assert len(missing) == int((~ok).sum())


def test_optimal_modulus_feeds_back(square_grid):
    V = RadialPlusTransversePotential(DoubleWellPotential(1.0, 1.0), 5.0, 2)
    pairs = PairSample.stratified(square_grid.points, math.sqrt(2), bins=16, per_bin=64)
    mod, missing = optimal_convexity_modulus(V, math.sqrt(2) / 2, 41, pairs)
    keep = ~np.isnan(mod(0.5 * pairs.geometry()[0]))
    sub = PairSample(pairs.points, pairs.i[keep], pairs.j[keep], pairs.edges)
    assert check_convexity_modulus(V, mod, sub, tol=1e-12).worst <= 1e-12


def test_optimal_modulus_convex_is_nonnegative():
    g = Grid(ConvexDomain.disc(1.0), 1 / 10)
    pairs = PairSample.all_pairs(g.points, 2.0)
    mod, _ = optimal_convexity_modulus(parse_potential("x1^4 + x2^2", 2), 1.0, 21, pairs)
    v = mod.values[~np.isnan(mod.values)]
    assert np.all(v >= -1e-12)


def test_double_well_disc_dominates_comparison():
    # brute force over all pairs of a coarse disc grid
    g = Grid(ConvexDomain.disc(1.0), 1 / 8)
    V = RadialPlusTransversePotential(DoubleWellPotential(1.0, 1.0), 5.0, 2)
    Vt = DoubleWellPotential(1.0, 1.0)
    pairs = PairSample.all_pairs(g.points, 2.0)
    r = check_convexity_modulus(V, fn(lambda z: Vt.gradient(z[:, None])[:, 0], 1.0), pairs)
    assert r.worst <= 1e-9


# -- log-concavity ----------------------------------------------------------------------


def test_grad_log_needs_positive():
    g = Grid(ConvexDomain.interval(-0.5, 0.5), 1 / 16)
    with pytest.raises(NonPositiveError):
        grad_log(GridFunction(g, np.zeros(g.size)))


def test_grad_log_of_cosine():
    g = Grid(ConvexDomain.interval(-0.5, 0.5), 1 / 256)
    G = grad_log(GridFunction(g, np.cos(math.pi * g.points[:, 0])))[:, 0]
    z = g.points[:, 0]
    inner = np.abs(z) < 0.4
    # centred differences: error ~ h^2/6 (log cos)''' ~ 5e-3 at |z| = 0.4
    assert np.abs(G[inner] + math.pi * np.tan(math.pi * z[inner])).max() < 1e-2


def test_log_concavity_sharp_square(square_phi0):
    D = math.sqrt(2)
    psi = fn(lambda z: -(math.pi / D) * np.tan(math.pi * z / D), D / 2, pole=True)
    pairs = PairSample.stratified(square_phi0.grid.points, D, bins=16, per_bin=128)
    r = check_log_concavity(square_phi0, psi, pairs)
    assert r.passed
    assert r.skipped["near_boundary"] > 0


def test_plain_log_concavity_square(square_phi0):
    D = math.sqrt(2)
    pairs = PairSample.stratified(square_phi0.grid.points, D, bins=16, per_bin=128)
    r = check_log_concavity(square_phi0, linear(0.0, D / 2), pairs, tol=1e-12)
    assert r.passed and r.worst < 0


def test_log_concavity_1d_equality():
    cal = calibrate_c_tol(1 / 128)
    # symmetric pairs are equalities up to discretisation error
    assert 0.0 <= cal["observed_c"] < 0.05
    assert cal["c_tol"] == 0.05


def test_log_concavity_too_strong_modulus_fails(square_phi0):
    D = math.sqrt(2)
    # the square is far from the 1D equality case: its Hessian of log phi0 is
    # at most -pi^2, so only a modulus steeper than that near z = 0 is violated
    psi = fn(lambda z: -(4 * math.pi / D) * np.tan(math.pi * z / D), D / 2, pole=True)
    pairs = PairSample.stratified(square_phi0.grid.points, D, bins=16, per_bin=128)
    assert not check_log_concavity(square_phi0, psi, pairs).passed


def test_self_comparison_quartic():
    # V~ = z^4 is its own comparison potential: its ground log-derivative is a
    # modulus of concavity for log phi0 in 1D
    Vt = parse_potential("x1^4", 1)
    D = 2.0
    g = fundamental_gap(ConvexDomain.interval(-1, 1), Vt, 1 / 256, richardson=False).phi0
    psi = log_derivative(solve_eigen_shooting(Vt, D))
    r = check_log_concavity(g, psi, PairSample.all_pairs(g.grid.points, D))
    assert r.passed


def test_brute_force_matches_sample_on_union():
    g = Grid(ConvexDomain.square(1.0), 1 / 16)
    V = RadialPlusTransversePotential(DoubleWellPotential(1.0, 1.0), 5.0, 2)
    mod = linear(-1.0, math.sqrt(2) / 2)
    allp = PairSample.all_pairs(g.points, math.sqrt(2))
    samp = PairSample.stratified(g.points, math.sqrt(2), bins=8, per_bin=32)
    a = check_convexity_modulus(V, mod, allp)
    b = check_convexity_modulus(V, mod, samp.union(allp))
    assert a.passed == b.passed
    assert a.worst == pytest.approx(b.worst, abs=1e-12)
