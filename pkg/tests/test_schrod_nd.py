import math

import numpy as np
import pytest

from fundgap.core.domain import ConvexDomain
from fundgap.core.grid import DegenerateGridError
from fundgap.core.potential import QuadraticPotential, ZeroPotential, parse_potential
from fundgap.schrod_nd import discretize, find_clusters, fundamental_gap, smallest_eigenpairs
from fundgap.sturm1d import solve_eigen_shooting
from oracles import J01, PI2

SQUARE = ConvexDomain.square(1.0)
DISC = ConvexDomain.disc(1.0)


@pytest.mark.parametrize("domain", [SQUARE, DISC, ConvexDomain.polygon([(-0.6, -0.5), (0.7, -0.4), (0.1, 0.6)])])
def test_operator_symmetric(domain):
    op = discretize(domain, ZeroPotential(2), 1 / 24)
    A = op.matrix
    assert abs(A - A.T).max() == 0.0
    rng = np.random.default_rng(3)
    u, v = rng.standard_normal((2, op.size))
    lhs = abs(u @ (A @ v) - v @ (A @ u))
    assert lhs <= 1e-12 * op.norm_estimate() * np.linalg.norm(u) * np.linalg.norm(v)


def test_interval_tridiagonal():
    op = discretize(ConvexDomain.interval(-0.5, 0.5), ZeroPotential(1), 1 / 256)
    A = op.matrix.toarray()
    n = op.size
    assert n == 255
    assert np.allclose(np.diag(A, 1), -256.0**2)
    assert np.count_nonzero(A) == n + 2 * (n - 1)


def test_disc_operator_positive_definite():
    op = discretize(DISC, ZeroPotential(2), 1 / 16)
    assert np.linalg.eigvalsh(op.matrix.toarray()).min() > 0


def test_degenerate_grid_rejected():
    with pytest.raises(DegenerateGridError):
        discretize(SQUARE, ZeroPotential(2), 1 / 8)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        discretize(SQUARE, ZeroPotential(1), 1 / 32)


def test_sine_residual_second_order():
    res = []
    for n in (32, 64):
        op = discretize(SQUARE, ZeroPotential(2), 1 / n)
        x, y = op.grid.points.T
        u = np.cos(math.pi * x) * np.cos(math.pi * y)
        res.append(np.abs(op.apply(u) - 2 * PI2 * u).max())
    assert math.log2(res[0] / res[1]) > 1.9


def test_interval_ground_state():
    op = discretize(ConvexDomain.interval(-0.5, 0.5), ZeroPotential(1), 1 / 512)
    r = smallest_eigenpairs(op, 2)
    assert abs(r.values[0] - PI2) < 5e-4
    assert r.vectors[:, 0].min() > 0
    assert np.all(r.residuals <= 1e-9)


def test_square_eigenpairs_and_cluster():
    op = discretize(SQUARE, ZeroPotential(2), 1 / 32)
    r = smallest_eigenpairs(op, 3)
    assert r.values[0] == pytest.approx(2 * PI2, rel=2e-3)
    assert r.values[1] == pytest.approx(5 * PI2, rel=5e-3)
    assert r.clusters and r.clusters[0]["indices"] == [1, 2]
    G = r.vectors.T @ r.vectors
    assert np.allclose(G, np.eye(3), atol=1e-10)


def test_find_clusters():
    c = find_clusters(np.array([1.0, 2.0, 2.0 + 1e-9, 3.0]), 1e-9)
    assert c == [{"indices": [1, 2], "spread": pytest.approx(1e-9), "gap_to_next": pytest.approx(1.0)}]
    assert find_clusters(np.array([1.0, 2.0]), 1e-9) == []


def test_separable_rectangle_matches_1d():
    # V = x1^2 + 2 x2^2 on a rectangle splits into two 1D problems
    dom = ConvexDomain.rectangle((1.0, 0.8))
    V = parse_potential("x1^2 + 2*x2^2", 2)
    g = fundamental_gap(dom, V, 1 / 32)
    a = solve_eigen_shooting(parse_potential("x1^2", 1), 1.0)
    b = solve_eigen_shooting(parse_potential("2*x1^2", 1), 0.8)
    assert g.fine.lam0 == pytest.approx(a.mu + b.mu, rel=1e-3)
    lam0_rich = (4 * g.fine.lam0 - g.coarse.lam0) / 3
    assert lam0_rich == pytest.approx(a.mu + b.mu, rel=1e-5)


def test_gap_result_invariants_disc():
    g = fundamental_gap(DISC, ZeroPotential(2), 1 / 16)
    for lv in (g.coarse, g.fine):
        assert lv.lam0 < lv.lam1
        assert lv.phi0.values.min() > 0
        assert np.linalg.norm(lv.phi0.values) == pytest.approx(1.0)
        assert abs(lv.phi0.values @ lv.phi1.values) < 1e-8
    assert g.multiplicity1 == 2
    assert g.gap_richardson >= 3 * PI2 / 4


def test_order_of_ground_eigenvalue_on_disc():
    errs = [abs(fundamental_gap(DISC, ZeroPotential(2), h, richardson=False).lam0 - J01**2)
            for h in (1 / 32, 1 / 64)]
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_thin_rectangle_near_equality():
    dom = ConvexDomain.rectangle((1.0, 0.1))
    g = fundamental_gap(dom, ZeroPotential(2), (1 / 64, 1 / 320))
    assert g.gap_richardson == pytest.approx(3 * PI2, rel=1e-4)
    assert g.gap_richardson >= 3 * PI2 / dom.diameter() ** 2


def test_harmonic_square_gap_above_bound():
    K = 4.0
    g = fundamental_gap(SQUARE, QuadraticPotential(K, 2), 1 / 32)
    assert g.gap_richardson >= 3 * PI2 / 2
