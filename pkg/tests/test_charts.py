import cmath
import math

import numpy as np
import pytest

from conic_moduli.charts import (
    Chart2Point,
    Chart3CornerPoint,
    DegenerateChartError,
    LiftingMatrix,
    blowdown2,
    blowdown3_corner,
    chart2_from_points,
    chart3_corner_from_points,
    pullback_report,
)


def test_blowdown2_example():
    p = Chart2Point(zeta=0j, R12=0.2, omega=math.pi / 6, phi=0.0, theta=0.0)
    z1, z2, z, rho12 = blowdown2(p)
    assert rho12 == pytest.approx(0.1, abs=1e-15)
    assert z1 == pytest.approx(0.1 + 0j, abs=1e-15)
    assert z2 == pytest.approx(-0.1 + 0j, abs=1e-15)
    assert z == pytest.approx(0.1 * math.sqrt(3) + 0j, abs=1e-15)


def test_blowdown2_boundary_cases():
    # omega = pi/2: z collapses to the center of mass, rho12 = R12
    p = Chart2Point(zeta=0.3 + 0.4j, R12=0.5, omega=math.pi / 2, phi=1.0, theta=2.0)
    _, _, z, rho12 = blowdown2(p)
    assert abs(z - p.zeta) < 1e-16
    assert rho12 == pytest.approx(0.5)
    # omega = 0: the two points coincide, z sits on the circle of radius R12
    q = Chart2Point(zeta=0j, R12=0.5, omega=0.0, phi=0.7, theta=0.0)
    z1, z2, z, rho12 = blowdown2(q)
    assert z1 == z2 == 0j
    assert abs(abs(z) - 0.5) < 1e-15


def test_chart2_inverse_example():
    q = chart2_from_points(0.1 + 0j, -0.1 + 0j, 0.1 * math.sqrt(3) + 0j)
    assert q.zeta == 0j
    assert q.R12 == pytest.approx(0.2, rel=1e-14)
    assert q.omega == pytest.approx(math.pi / 6, rel=1e-14)
    assert q.phi == pytest.approx(0.0, abs=1e-15)
    assert q.theta == pytest.approx(0.0, abs=1e-15)


def test_chart2_coincident_pair():
    q = chart2_from_points(0j, 0j, 0.5 + 0j)
    assert q.omega == 0.0
    assert q.R12 == pytest.approx(0.5)


def test_chart2_degenerate_center():
    with pytest.raises(DegenerateChartError):
        chart2_from_points(0.2 + 0.3j, 0.2 + 0.3j, 0.2 + 0.3j)


def test_swap_symmetry():
    # theta -> theta + pi swaps z1, z2 and fixes z
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = Chart2Point(
            zeta=complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            R12=rng.uniform(0.01, 1.0),
            omega=rng.uniform(0, math.pi / 2),
            phi=rng.uniform(0, 2 * math.pi),
            theta=rng.uniform(0, 2 * math.pi),
        )
        z1, z2, z, _ = blowdown2(p)
        q = Chart2Point(p.zeta, p.R12, p.omega, p.phi, p.theta + math.pi)
        w1, w2, w, _ = blowdown2(q)
        assert abs(w1 - z2) < 5e-16 * (1 + abs(z2))
        assert abs(w2 - z1) < 5e-16 * (1 + abs(z1))
        assert w == z


def test_roundtrip_coordinates_interior():
    rng = np.random.default_rng(5)
    for _ in range(300):
        p = Chart2Point(
            zeta=complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            R12=rng.uniform(0.05, 1.0),
            omega=rng.uniform(0.05, math.pi / 2 - 0.05),
            phi=rng.uniform(0, 2 * math.pi),
            theta=rng.uniform(0, 2 * math.pi),
        )
        z1, z2, z, _ = blowdown2(p)
        q = chart2_from_points(z1, z2, z)
        assert q.R12 == pytest.approx(p.R12, rel=1e-12)
        assert q.omega == pytest.approx(p.omega, abs=1e-12)
        assert abs(q.zeta - p.zeta) < 1e-13
        assert math.remainder(q.theta - p.theta, 2 * math.pi) == pytest.approx(0.0, abs=1e-11)
        assert math.remainder(q.phi - p.phi, 2 * math.pi) == pytest.approx(0.0, abs=1e-11)


def test_blowdown3_corner_boundary_cases():
    # R12 = 0: the pair collapses onto the center, z3 on the R123 circle
    p = Chart3CornerPoint(zeta=0.1 + 0j, R123=0.4, R12=0.0, omega12=0.3, phi12=0.2, theta12=0.5, phi2=1.2)
    z1, z2, z3, z = blowdown3_corner(p)
    assert z1 == z2 == p.zeta
    assert abs((z3 - p.zeta) - 0.4 * cmath.exp(1.2j)) < 1e-15
    # omega12 = pi/2, R12 = 1: z hits the inner blowup center
    q = Chart3CornerPoint(R123=0.7, R12=1.0, omega12=math.pi / 2, phi12=0.0, theta12=0.0, phi2=0.0)
    _, _, _, z = blowdown3_corner(q)
    assert abs(z - q.zeta) < 1e-15


def generic_chart_oracle(p: Chart3CornerPoint):
    """Two-step composition: the mid-level chart followed by the corner substitution.

    Mid-level coordinates (R123, omega, phi, rho12, theta12, phi2) map by
      z1 - zeta = R123 sin(omega) rho12 e^{i theta12}   (= -(z2 - zeta))
      z3 - zeta = R123 sin(omega) sqrt(1 - rho12^2) e^{i phi2}
      z  - zeta = R123 cos(omega) e^{i phi}
    and the corner substitution is cos(omega) e^{i phi} = R12 cos(w12) e^{i phi12},
    rho12 = R12 sin(w12).
    """
    a = p.R12 * math.cos(p.omega12)
    rho12 = p.R12 * math.sin(p.omega12)
    cos_omega = a
    sin_omega = math.sqrt(1.0 - cos_omega**2)
    phi = p.phi12
    w1 = p.R123 * sin_omega * rho12 * cmath.exp(1j * p.theta12)
    z3 = p.zeta + p.R123 * sin_omega * math.sqrt(1.0 - rho12**2) * cmath.exp(1j * p.phi2)
    z = p.zeta + p.R123 * cos_omega * cmath.exp(1j * phi)
    return p.zeta + w1, p.zeta - w1, z3, z


def test_blowdown3_matches_generic_composition():
    rng = np.random.default_rng(9)
    for _ in range(500):
        p = Chart3CornerPoint(
            zeta=complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            R123=rng.uniform(0.0, 1.0),
            R12=rng.uniform(0.0, 0.999),
            omega12=rng.uniform(0, math.pi / 2),
            phi12=rng.uniform(0, 2 * math.pi),
            theta12=rng.uniform(0, 2 * math.pi),
            phi2=rng.uniform(0, 2 * math.pi),
        )
        ours = blowdown3_corner(p)
        oracle = generic_chart_oracle(p)
        for a, b in zip(ours, oracle):
            assert abs(a - b) <= 1e-12 * (1 + abs(b))


def test_chart3_corner_roundtrip():
    rng = np.random.default_rng(13)
    for _ in range(200):
        p = Chart3CornerPoint(
            R123=rng.uniform(0.1, 1.0),
            R12=rng.uniform(0.05, 0.5),
            omega12=rng.uniform(0.05, math.pi / 2 - 0.05),
            phi12=rng.uniform(0, 2 * math.pi),
            theta12=rng.uniform(0, 2 * math.pi),
            phi2=rng.uniform(0, 2 * math.pi),
        )
        q = chart3_corner_from_points(*blowdown3_corner(p))
        assert q.R123 == pytest.approx(p.R123, rel=1e-12)
        assert q.R12 == pytest.approx(p.R12, rel=1e-11)
        assert q.omega12 == pytest.approx(p.omega12, abs=1e-11)


def test_lifting_matrix_row_condition():
    good = LiftingMatrix(rows=("a", "b"), cols=("x", "y"), entries=((1, 0), (0, 2)))
    assert good.row_condition_ok()
    bad = LiftingMatrix(rows=("a",), cols=("x", "y"), entries=((1, 1),))
    assert not bad.row_condition_ok()
    with pytest.raises(ValueError):
        LiftingMatrix(rows=("a",), cols=("x",), entries=((-1,),))


def test_pullback_two_chart():
    rep = pullback_report("two", samples=4000, region=0.3, seed=101)
    assert rep.lifting.row_condition_ok()
    assert rep.lifting.entries == ((1,), (1,))
    lo, hi = rep.factors["rho12"]
    # A = sin(omega)/omega on (0, pi/2]
    assert 2 / math.pi - 1e-12 <= lo and hi <= 1.0 + 1e-12
    assert rep.amin > 0.5
    assert rep.positivity_ok


def test_pullback_three_corner_chart():
    rep = pullback_report("three-corner", samples=4000, region=0.3, seed=101)
    assert rep.lifting.row_condition_ok()
    assert rep.lifting.entries == ((1, 0), (0, 1), (0, 1))
    lo123, hi123 = rep.factors["rho123"]
    assert math.sqrt(0.91) - 1e-12 <= lo123 and hi123 <= 1.0 + 1e-12
    lo12, hi12 = rep.factors["rho12"]
    assert 2 / math.pi - 1e-12 <= lo12 and hi12 <= 1.0 + 1e-12
    assert rep.amin > 0.5
    assert rep.roundtrip_max_err < 1e-12


def test_pullback_rejects_bad_arguments():
    with pytest.raises(ValueError):
        pullback_report("two", samples=0)
    with pytest.raises(ValueError):
        pullback_report("two", region=1.5)
    with pytest.raises(ValueError):
        pullback_report("five")
