"""Iterated polar charts for two and three coalescing points.

The two-point chart covers the blowup where a pair merges with a spectator
point nearby; the three-point corner chart covers the depth-two tower where
a pair merges inside a merging triple.  Blowdown maps send chart
coordinates back to the marked points, and ``pullback_report`` verifies
numerically that base boundary defining functions pull back to monomials in
the total-space defining functions times a smooth positive factor, with at
most one base face per total-space face (the fibration condition on the
exponent matrix).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Chart2Point",
    "Chart3CornerPoint",
    "LiftingMatrix",
    "PullbackReport",
    "blowdown2",
    "chart2_from_points",
    "blowdown3_corner",
    "chart3_corner_from_points",
    "pullback_report",
    "DegenerateChartError",
]

TWO_PI = 2.0 * math.pi
# omega-type angles live in [0, pi/2]; allow this much roundoff slack
_OMEGA_SLACK = 1e-15
# keep verification samples off the omega = pi/2 coordinate singularity
OMEGA_MARGIN = 1e-6


class DegenerateChartError(ValueError):
    """Raised when inverting a chart at its blown-up center."""


def _wrap_angle(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    return a + TWO_PI if a < 0 else a


def _check_omega(omega: float, name: str) -> float:
    if -_OMEGA_SLACK <= omega < 0.0:
        return 0.0
    if math.pi / 2 < omega <= math.pi / 2 + _OMEGA_SLACK:
        return math.pi / 2
    if not 0.0 <= omega <= math.pi / 2:
        raise ValueError(f"{name} must lie in [0, pi/2], got {omega}")
    return omega


@dataclass(frozen=True)
class Chart2Point:
    """Spherical coordinates (R12, omega, phi) over the merging pair.

    rho12 = R12*sin(omega) is the pair separation scale; the point z sits at
    distance R12*cos(omega) from the center of mass zeta in direction phi,
    and theta is the direction through which the pair approaches.
    """

    zeta: complex = 0j
    R12: float = 0.0
    omega: float = 0.0
    phi: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        if self.R12 < 0:
            raise ValueError("R12 must be nonnegative")
        object.__setattr__(self, "omega", _check_omega(self.omega, "omega"))
        object.__setattr__(self, "phi", _wrap_angle(self.phi))
        object.__setattr__(self, "theta", _wrap_angle(self.theta))


@dataclass(frozen=True)
class Chart3CornerPoint:
    """Corner chart where a pair merges inside a merging triple."""

    zeta: complex = 0j
    R123: float = 0.0
    R12: float = 0.0
    omega12: float = 0.0
    phi12: float = 0.0
    theta12: float = 0.0
    phi2: float = 0.0

    def __post_init__(self) -> None:
        if self.R123 < 0 or self.R12 < 0:
            raise ValueError("radial coordinates must be nonnegative")
        object.__setattr__(self, "omega12", _check_omega(self.omega12, "omega12"))
        for name in ("phi12", "theta12", "phi2"):
            object.__setattr__(self, name, _wrap_angle(getattr(self, name)))


def blowdown2(p: Chart2Point) -> tuple[complex, complex, complex, float]:
    """Map chart coordinates to (z1, z2, z, rho12).

    z1 = zeta + rho12 e^{i theta},  z2 = zeta - rho12 e^{i theta},
    z  = zeta + R12 cos(omega) e^{i phi},  rho12 = R12 sin(omega).
    """
    rho12 = p.R12 * math.sin(p.omega)
    w = rho12 * cmath.exp(1j * p.theta)
    z = p.zeta + p.R12 * math.cos(p.omega) * cmath.exp(1j * p.phi)
    return p.zeta + w, p.zeta - w, z, rho12


def chart2_from_points(z1: complex, z2: complex, z: complex) -> Chart2Point:
    """Invert the two-point blowdown.

    The center of mass is zeta = (z1+z2)/2; the chart degenerates exactly on
    the blown-up center z1 = z2, z = zeta (R12 = 0).
    """
    zeta = 0.5 * (z1 + z2)
    w = 0.5 * (z1 - z2)
    rho12 = abs(w)
    zrel = z - zeta
    r = abs(zrel)
    R12 = math.hypot(rho12, r)
    if R12 == 0.0:
        raise DegenerateChartError("z1 = z2 and z = zeta: point on the blown-up center")
    omega = math.atan2(rho12, r)
    theta = cmath.phase(w) if rho12 > 0 else 0.0
    phi = cmath.phase(zrel) if r > 0 else 0.0
    return Chart2Point(zeta=zeta, R12=R12, omega=omega, phi=phi, theta=theta)


def blowdown3_corner(p: Chart3CornerPoint) -> tuple[complex, complex, complex, complex]:
    """Map corner-chart coordinates to (z1, z2, z3, z).

    z1 - zeta = -(z2 - zeta) = R123 sqrt(1-(R12 cos w12)^2) R12 sin(w12) e^{i theta12},
    z3 - zeta = R123 sqrt(1-(R12 cos w12)^2) sqrt(1-(R12 sin w12)^2) e^{i phi2},
    z  - zeta = R123 R12 cos(w12) e^{i phi12}.
    """
    c, s = math.cos(p.omega12), math.sin(p.omega12)
    a = p.R12 * c
    b = p.R12 * s
    outer = math.sqrt(max(0.0, 1.0 - a * a))
    w1 = p.R123 * outer * b * cmath.exp(1j * p.theta12)
    z3 = p.zeta + p.R123 * outer * math.sqrt(max(0.0, 1.0 - b * b)) * cmath.exp(1j * p.phi2)
    z = p.zeta + p.R123 * a * cmath.exp(1j * p.phi12)
    return p.zeta + w1, p.zeta - w1, z3, z


def chart3_corner_from_points(
    z1: complex, z2: complex, z3: complex, z: complex
) -> Chart3CornerPoint:
    """Invert the corner blowdown.

    Uses R123^2 = |w1|^2 + |w2|^2 + |z-zeta|^2 with w1 = (z1-z2)/2 and
    w2 = z3 - zeta, which follows from the blowdown formulas.
    """
    zeta = 0.5 * (z1 + z2)
    w1 = 0.5 * (z1 - z2)
    w2 = z3 - zeta
    v = z - zeta
    rho123 = math.hypot(abs(w1), abs(w2))
    R123 = math.hypot(rho123, abs(v))
    if R123 == 0.0 or rho123 == 0.0:
        raise DegenerateChartError("configuration lies on a blown-up center")
    a = abs(v) / R123  # R12 cos(omega12)
    rho12 = abs(w1) / rho123  # R12 sin(omega12)
    R12 = math.hypot(a, rho12)
    omega12 = math.atan2(rho12, a)
    return Chart3CornerPoint(
        zeta=zeta,
        R123=R123,
        R12=R12,
        omega12=omega12,
        phi12=cmath.phase(v) if abs(v) > 0 else 0.0,
        theta12=cmath.phase(w1) if abs(w1) > 0 else 0.0,
        phi2=cmath.phase(w2) if abs(w2) > 0 else 0.0,
    )


@dataclass(frozen=True)
class LiftingMatrix:
    """Integer exponents e(i,j) in the pullback of base defining functions.

    Rows are total-space faces, columns base faces.  The fibration condition
    requires at most one nonzero entry per row.
    """

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.rows):
            raise ValueError("entry rows do not match row labels")
        for row in self.entries:
            if len(row) != len(self.cols):
                raise ValueError("entry columns do not match column labels")
            if any(e < 0 for e in row):
                raise ValueError("exponents must be nonnegative integers")

    def row_condition_ok(self) -> bool:
        return all(sum(1 for e in row if e != 0) <= 1 for row in self.entries)


@dataclass
class PullbackReport:
    """Observed smooth factors A = pullback / product of bdf^exponent."""

    chart: str
    lifting: LiftingMatrix
    factors: dict[str, tuple[float, float]]  # base face -> (Amin, Amax)
    amin: float
    amax: float
    roundtrip_max_err: float
    samples: int
    seed: int
    region: float
    positivity_ok: bool = field(default=True)
    failure: str | None = field(default=None)


# Total-space faces per chart: the pair face (bdf R12), the triple face
# (bdf R123), and the fiber-surface boundary whose bdf is the omega angle.
_LIFT_TWO = LiftingMatrix(
    rows=("C12[R12]", "fiber[omega]"),
    cols=("rho12",),
    entries=((1,), (1,)),
)
_LIFT_THREE = LiftingMatrix(
    rows=("C123[R123]", "C12[R12]", "fiber[omega12]"),
    cols=("rho123", "rho12"),
    entries=((1, 0), (0, 1), (0, 1)),
)


def _roundtrip_two(rng: np.random.Generator, samples: int, region: float) -> float:
    """Point-level roundtrip error of the two-point chart on interior samples."""
    worst = 0.0
    for _ in range(samples):
        p = Chart2Point(
            zeta=complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            R12=rng.uniform(0.1 * region, region),
            omega=rng.uniform(0.0, math.pi / 2 - OMEGA_MARGIN),
            phi=rng.uniform(0, TWO_PI),
            theta=rng.uniform(0, TWO_PI),
        )
        z1, z2, z, _ = blowdown2(p)
        q = chart2_from_points(z1, z2, z)
        w1, w2, w, _ = blowdown2(q)
        scale = max(1.0, abs(z1), abs(z2), abs(z))
        err = max(abs(z1 - w1), abs(z2 - w2), abs(z - w)) / scale
        worst = max(worst, err)
    return worst


def _roundtrip_three(rng: np.random.Generator, samples: int, region: float) -> float:
    """Point-level roundtrip error of the corner chart on interior samples."""
    worst = 0.0
    for _ in range(samples):
        p = Chart3CornerPoint(
            zeta=complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),
            R123=rng.uniform(0.1, 1.0),
            R12=rng.uniform(0.1 * region, region),
            omega12=rng.uniform(0.05, math.pi / 2 - OMEGA_MARGIN),
            theta12=rng.uniform(0, TWO_PI),
            phi12=rng.uniform(0, TWO_PI),
            phi2=rng.uniform(0, TWO_PI),
        )
        pts = blowdown3_corner(p)
        q = chart3_corner_from_points(*pts)
        qts = blowdown3_corner(q)
        scale = max(1.0, *(abs(x) for x in pts))
        err = max(abs(a - b) for a, b in zip(pts, qts)) / scale
        worst = max(worst, err)
    return worst


def pullback_report(
    chart: str,
    samples: int = 10_000,
    region: float = 0.3,
    seed: int = 20240,
) -> PullbackReport:
    """Sample a chart region and verify the b-fibration pullback relations.

    For each base boundary defining function rho, the observed smooth factor
    is A = (rho composed with the blowdown) / prod(bdf^exponent) with the
    integer exponents of the lifting matrix.  Reports min/max of A per base
    face; a factor not bounded away from zero is reported as a verification
    failure, not raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0.0 < region < 1.0:
        raise ValueError("region must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    factors: dict[str, list[float]] = {}

    if chart == "two":
        lifting = _LIFT_TWO
        for _ in range(samples):
            R12 = rng.uniform(1e-6, region)
            omega = rng.uniform(1e-9, math.pi / 2 - OMEGA_MARGIN)
            p = Chart2Point(R12=R12, omega=omega)
            _, _, _, rho12 = blowdown2(p)
            factors.setdefault("rho12", []).append(rho12 / (R12 * omega))
        roundtrip = _roundtrip_two(rng, min(samples, 10_000), region)
    elif chart == "three-corner":
        lifting = _LIFT_THREE
        for _ in range(samples):
            p = Chart3CornerPoint(
                R123=rng.uniform(1e-6, 1.0),
                R12=rng.uniform(1e-6, region),
                omega12=rng.uniform(1e-9, math.pi / 2 - OMEGA_MARGIN),
                theta12=rng.uniform(0, TWO_PI),
                phi12=rng.uniform(0, TWO_PI),
                phi2=rng.uniform(0, TWO_PI),
            )
            z1, z2, z3, _ = blowdown3_corner(p)
            # base coordinates, recomputed independently from the points
            w1 = 0.5 * (z1 - z2)
            w2 = z3 - 0.5 * (z1 + z2)
            rho123 = math.hypot(abs(w1), abs(w2))
            rho12 = abs(w1) / rho123
            factors.setdefault("rho123", []).append(rho123 / p.R123)
            factors.setdefault("rho12", []).append(rho12 / (p.R12 * p.omega12))
        roundtrip = _roundtrip_three(rng, min(samples, 10_000), region)
    else:
        raise ValueError(f"unknown chart {chart!r} (expected 'two' or 'three-corner')")

    if not lifting.row_condition_ok():
        raise AssertionError("lifting matrix violates the one-nonzero-per-row condition")
    ranges = {k: (min(v), max(v)) for k, v in factors.items()}
    amin = min(lo for lo, _ in ranges.values())
    amax = max(hi for _, hi in ranges.values())
    positivity_ok = amin > 1e-12
    return PullbackReport(
        chart=chart,
        lifting=lifting,
        factors=ranges,
        amin=amin,
        amax=amax,
        roundtrip_max_err=roundtrip,
        samples=samples,
        seed=seed,
        region=region,
        positivity_ok=positivity_ok,
        failure=None if positivity_ok else "smooth factor not bounded away from zero",
    )
