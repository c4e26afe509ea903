"""Closed-form geometry and measure factors for the ball-piston cell.

Configuration space packs the two ball coordinates and the piston coordinate
into q = (q1, q2, q3).  The ball moves in the unit square centered at the
origin minus four discs of radius rho centered at the corners (+-1/2, +-1/2);
the piston face is the vertical segment q1 = q3, |q2| <= eta/2, and the
piston coordinate q3 travels in the slot

    (1 - lam)/2 - delta  <=  q3  <=  (1 + lam)/2 + delta,

where lam = sqrt(4 rho^2 - 1) is the gap opened between the two right-corner
discs and eta is the free height of the channel at the innermost piston
station.  The ball never passes the face (q1 <= q3 throughout).

Everything in this module is an exact closed form; Monte Carlo and
quadrature cross-checks live in the test suite.
"""

import math
from dataclasses import dataclass

from .errors import ParameterError

SQRT2 = math.sqrt(2.0)

# Total kinetic energy is fixed to 1/2 (unit speed) throughout this module;
# the ball/piston split is eb + ep = 1/2.
TOTAL_ENERGY = 0.5


@dataclass(frozen=True)
class GeometryParams:
    """Cell parameters: corner-disc radius rho and piston protrusion delta.

    rho must satisfy 1/2 < rho < 1/sqrt(2) so that neighboring discs
    overlap the square's edges without closing the cell, and delta must
    satisfy 0 < delta <= (1 - lam)/2 so the whole piston slot stays inside
    the gap between the right-corner discs.
    """

    rho: float
    delta: float

    def __post_init__(self) -> None:
        if not 0.5 < self.rho < 1.0 / SQRT2:
            raise ParameterError(
                f"rho must satisfy 1/2 < rho < 1/sqrt(2); got rho={self.rho!r}"
            )
        lam = math.sqrt(4.0 * self.rho * self.rho - 1.0)
        if not 0.0 < self.delta <= 0.5 * (1.0 - lam):
            raise ParameterError(
                "delta must satisfy 0 < delta <= (1 - lam)/2 = "
                f"{0.5 * (1.0 - lam):.17g}; got delta={self.delta!r}"
            )

    @property
    def lam(self) -> float:
        """Width of the channel mouth between the right-corner discs."""
        return math.sqrt(4.0 * self.rho * self.rho - 1.0)

    @property
    def eta(self) -> float:
        """Free channel height at the innermost piston station."""
        half = 0.5 * self.lam + self.delta
        return 1.0 - 2.0 * math.sqrt(self.rho * self.rho - half * half)

    @property
    def slot_min(self) -> float:
        return 0.5 * (1.0 - self.lam) - self.delta

    @property
    def slot_max(self) -> float:
        return 0.5 * (1.0 + self.lam) + self.delta


@dataclass(frozen=True)
class GeometrySummary:
    """Derived measures of the three-dimensional billiard domain.

    Areas are 2-dimensional surface measures of the boundary pieces where
    the ball meets the piston face (bp), the ball meets a wall arc (bw),
    and the piston meets a slot end (pw); gamma_volume is the volume of
    the accessible configuration domain and core_area the area of the
    ball's chamber with the channel closed.  tau_* are the mean free
    flight times between returns to each boundary piece at unit speed,
    tau = 4 * volume / area in this three-dimensional setting.
    """

    rho: float
    delta: float
    lam: float
    eta: float
    core_area: float
    gamma_volume: float
    area_bp: float
    area_bw: float
    area_pw: float
    tau_bp: float
    tau_bw: float
    tau_pw: float
    tau_total: float


def derive_geometry(params: GeometryParams) -> GeometrySummary:
    """Evaluate all closed-form measures for the given cell parameters."""
    rho, delta = params.rho, params.delta
    rho2 = rho * rho
    lam = params.lam
    width = lam + 2.0 * delta
    # root = distance between the channel walls at the outermost station,
    # i.e. 1 - 2*(sagitta of the disc over the half-width lam/2 + delta).
    root = math.sqrt(1.0 - 4.0 * delta * (lam + delta))
    atl = math.atan(lam)
    dat = atl - math.atan(width / root)

    core = 1.0 - lam - rho2 * (math.pi - 4.0 * atl)

    volume = (
        width * core
        - (
            2.0 * delta * (lam + 4.0 * delta)
            + (1.0 - root) * (2.0 + 4.0 * delta * (lam + delta) + 3.0 * lam * lam)
        )
        / 24.0
        - 0.5 * rho2 * width * dat
    )

    area_bp = (width * (2.0 - root) - lam) / (2.0 * SQRT2) + SQRT2 * rho2 * dat
    area_pw = 2.0 * core - area_bp / SQRT2
    area_bw = rho * width * (
        8.0 * math.asin((1.0 - lam) / (2.0 * SQRT2 * rho))
        - math.asin(width / (2.0 * rho))
        + math.asin(lam / (2.0 * rho))
    ) + rho * (1.0 - root)

    area_sum = area_bp + area_bw + area_pw
    return GeometrySummary(
        rho=rho,
        delta=delta,
        lam=lam,
        eta=params.eta,
        core_area=core,
        gamma_volume=volume,
        area_bp=area_bp,
        area_bw=area_bw,
        area_pw=area_pw,
        tau_bp=4.0 * volume / area_bp,
        tau_bw=4.0 * volume / area_bw,
        tau_pw=4.0 * volume / area_pw,
        tau_total=4.0 * volume / area_sum,
    )


def contains(params: GeometryParams, q) -> bool:
    """True when the configuration q = (q1, q2, q3) lies in the closed domain.

    Boundary points count as inside (non-strict inequalities throughout).
    """
    q1, q2, q3 = float(q[0]), float(q[1]), float(q[2])
    if abs(q1) > 0.5 or abs(q2) > 0.5:
        return False
    if q1 > q3:
        return False
    if not params.slot_min <= q3 <= params.slot_max:
        return False
    rho2 = params.rho * params.rho
    for sx in (-0.5, 0.5):
        for sy in (-0.5, 0.5):
            if (q1 - sx) ** 2 + (q2 - sy) ** 2 < rho2:
                return False
    return True


def flux_factor(ep: float) -> float:
    """Angular factor g(ep) of the face-collision rate on the fixed-ep shell.

    g(ep) is the mean of the positive normal velocity over the directions
    compatible with piston energy ep at unit total speed; the conditional
    collision frequency on the face is area_bp * g(ep) / gamma_volume.
    The two branches join continuously at ep = 1/4.
    """
    if not 0.0 < ep < 0.5:
        raise ParameterError(f"ep must satisfy 0 < ep < 1/2; got ep={ep!r}")
    if ep < 0.25:
        return (
            math.sqrt(0.5 - 2.0 * ep)
            + math.sqrt(ep) * math.asin(math.sqrt(ep / (0.5 - ep)))
        ) / math.pi
    return 0.5 * math.sqrt(ep)


def conditional_rate(summary: GeometrySummary, ep: float) -> tuple[float, float]:
    """Face-collision frequency at fixed piston energy, and its shape factor.

    Returns (nu_ep, phi) where nu_ep is the expected number of face
    collisions per unit time on the shell of piston energy ep, and
    phi = tau_bp * nu_ep = 4 * g(ep) is the parameter-free shape factor.
    """
    g = flux_factor(ep)
    nu = summary.area_bp * g / summary.gamma_volume
    return nu, 4.0 * g


def small_delta_rate(rho: float) -> float:
    """Leading coefficient of the face-collision frequency as delta -> 0.

    For small protrusion area_bp ~= sqrt(2) * lam * delta**2 while
    gamma_volume -> lam * core_area, so the frequency at fixed ep obeys

        nu_ep  ~=  small_delta_rate(rho) * 4 * g(ep) * delta**2

    with small_delta_rate = 1 / (2 sqrt(2) core_area).
    """
    if not 0.5 < rho < 1.0 / SQRT2:
        raise ParameterError(
            f"rho must satisfy 1/2 < rho < 1/sqrt(2); got rho={rho!r}"
        )
    lam = math.sqrt(4.0 * rho * rho - 1.0)
    core = 1.0 - lam - rho * rho * (math.pi - 4.0 * math.atan(lam))
    return 1.0 / (2.0 * SQRT2 * core)
