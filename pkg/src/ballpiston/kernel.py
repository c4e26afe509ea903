"""Mesoscopic energy-exchange layer.

The collision kernel W as a rate density over the outgoing piston energy,
its closed-form moments, the canonical-average identities they satisfy,
exact pathwise simulation of the induced Markov jump process, and a
conservative grid integrator for the master equation.  Formulas are
homogeneous in energy, so any total is supported; the billiard-facing
modules always work at total 1/2.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NumericalError, ParameterError
from .geometry import GeometrySummary

__all__ = [
    "EnergyGridDensity",
    "EnergyPair",
    "JumpLog",
    "canonical_check",
    "gillespie",
    "gillespie_ensemble",
    "kernel_density",
    "master_evolve",
    "moments",
    "sample_jump",
]

TWO_PI = 2.0 * math.pi

# Explicit Euler steps of the master equation must resolve the fastest cell.
STABILITY_FACTOR = 0.5


@dataclass(frozen=True)
class EnergyPair:
    """Ball/piston energy split; only the nonnegative quadrant is meaningful."""

    eb: float
    ep: float

    def __post_init__(self):
        if not (np.isfinite(self.eb) and np.isfinite(self.ep)):
            raise ParameterError(f"energies must be finite; got {self!r}")
        if self.eb < 0.0 or self.ep < 0.0:
            raise ParameterError(f"energies must be nonnegative; got {self!r}")
        if self.eb + self.ep <= 0.0:
            raise ParameterError("total energy must be positive")

    @property
    def etotal(self) -> float:
        return self.eb + self.ep


def _prefactor(geom: GeometrySummary) -> float:
    return geom.area_bp / geom.gamma_volume


def kernel_density(pair: EnergyPair, ep_out, geom: GeometrySummary):
    """Rate density of a collision leaving the piston at energy ep_out.

    W = |face area|/(2 pi |phase volume|) * max(sqrt(ep_out), sqrt(ep))
        / sqrt(ep_out (eb - ep_out)),  zero beyond ep_out = eb.

    The endpoint singularities at ep_out in {0, eb} are integrable and
    reported as +inf.  Accepts scalar or array ep_out.
    """
    ep_out = np.asarray(ep_out, dtype=float)
    if (ep_out < 0.0).any():
        raise ParameterError("ep_out must be nonnegative")
    c = _prefactor(geom) / TWO_PI
    eb, ep = pair.eb, pair.ep
    with np.errstate(divide="ignore", invalid="ignore"):
        w = c * np.maximum(np.sqrt(ep_out), math.sqrt(ep)) \
            / np.sqrt(ep_out * (eb - ep_out))
    # ep = ep_out = 0 is a finite limit, not 0/0
    w = np.where((ep_out == 0.0) & (ep == 0.0),
                 np.divide(c, math.sqrt(eb)) if eb > 0.0 else np.inf, w)
    w = np.where(ep_out > eb, 0.0, w)
    return float(w) if w.ndim == 0 else w


# -- closed-form moments ------------------------------------------------------
#
# Each moment splits at eb = ep.  The pieces are kept separate so the branch
# continuity there can be checked directly.


def _asin_ratio(eb, ep):
    ratio = np.divide(ep, eb, out=np.zeros_like(np.asarray(ep, dtype=float)),
                      where=np.asarray(eb) > 0.0)
    return np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0)))


def _f_above(eb, ep):
    return (np.sqrt(np.maximum(eb - ep, 0.0))
            + np.sqrt(ep) * _asin_ratio(eb, ep)) / math.pi


def _f_below(eb, ep):
    return 0.5 * np.sqrt(ep)


def _j_above(eb, ep):
    root = np.sqrt(np.maximum(eb - ep, 0.0))
    return ((4.0 * eb - 7.0 * ep) * root
            + 3.0 * (eb - 2.0 * ep) * np.sqrt(ep) * _asin_ratio(eb, ep)) \
        / (6.0 * math.pi)


def _j_below(eb, ep):
    return 0.25 * (eb - 2.0 * ep) * np.sqrt(ep)


def _h_poly(eb, ep):
    return 0.375 * eb * eb - eb * ep + ep * ep


def _h_above(eb, ep):
    root = np.sqrt(np.maximum(eb - ep, 0.0))
    return (8.0 * root ** 5
            + 15.0 * (np.sqrt(ep) * _h_poly(eb, ep) * _asin_ratio(eb, ep)
                      - 0.375 * ep * (eb - 2.0 * ep) * root)) \
        / (15.0 * math.pi)


def _h_below(eb, ep):
    return 0.5 * np.sqrt(ep) * _h_poly(eb, ep)


def _raw_moments(eb, ep):
    """(f, j, h) without the geometric prefactor, vectorized."""
    eb = np.asarray(eb, dtype=float)
    ep = np.asarray(ep, dtype=float)
    above = eb > ep
    f = np.where(above, _f_above(eb, ep), _f_below(eb, ep))
    j = np.where(above, _j_above(eb, ep), _j_below(eb, ep))
    h = np.where(above, _h_above(eb, ep), _h_below(eb, ep))
    return f, j, h


def moments(pair: EnergyPair, geom: GeometrySummary):
    """Zeroth, first, and second moments of the transfer rate: (f, j, h).

    f is the total collision rate at the given energy split, j the mean
    rate of energy transfer into the piston, h the second-moment rate.
    """
    pref = _prefactor(geom)
    f, j, h = _raw_moments(pair.eb, pair.ep)
    return pref * float(f), pref * float(j), pref * float(h)


def canonical_check(beta: float, geom: GeometrySummary,
                    tol: float = 1e-6) -> tuple:
    """Evaluate the three canonical averages that collapse to one rate.

    Returns (<f>, (beta^2/2)<(eb-ep) j>, (beta^2/2)<h>, target) where the
    averages are over the product measure beta^{3/2}/sqrt(pi ep) *
    exp(-beta(eb+ep)) and the target is |face|/|volume|/sqrt(2 pi beta).
    Raises NumericalError if the quadrature fails to reconcile them
    within tol.
    """
    if beta <= 0.0:
        raise ParameterError(f"beta must be positive; got {beta!r}")
    pref = _prefactor(geom)
    target = pref / math.sqrt(TWO_PI * beta)

    # substitute ep = u^2: the measure weight becomes smooth
    coeff = 2.0 * beta ** 1.5 / math.sqrt(math.pi)

    def average(raw, extra):
        def integrand(eb, u):
            e = u * u
            return (coeff * math.exp(-beta * (eb + e))
                    * float(raw(eb, e)) * extra(eb, e))

        total = 0.0
        err = 0.0
        for lo, hi in ((lambda u: 0.0, lambda u: u * u),
                       (lambda u: u * u, lambda u: np.inf)):
            val, est = integrate.dblquad(integrand, 0.0, np.inf, lo, hi,
                                         epsabs=1e-12, epsrel=1e-10)
            total += val
            err += est
        if pref * err > tol * target:
            raise NumericalError(
                f"canonical average quadrature error {pref * err:g} "
                f"exceeds tol*target {tol * target:g}")
        return pref * total

    one = lambda eb, e: 1.0
    half_beta2 = 0.5 * beta * beta
    vals = (average(_raw_f_scalar, one),
            half_beta2 * average(_raw_j_scalar, lambda eb, e: eb - e),
            half_beta2 * average(_raw_h_scalar, one),
            target)
    spread = (max(vals) - min(vals)) / target
    if spread > tol:
        raise NumericalError(
            f"canonical averages disagree: relative spread {spread:g} > "
            f"{tol:g}; values {vals}")
    return vals


def _raw_f_scalar(eb: float, ep: float) -> float:
    if eb > ep:
        return (math.sqrt(eb - ep)
                + math.sqrt(ep) * math.asin(math.sqrt(ep / eb))) / math.pi
    return 0.5 * math.sqrt(ep)


def _raw_j_scalar(eb: float, ep: float) -> float:
    if eb > ep:
        return ((4.0 * eb - 7.0 * ep) * math.sqrt(eb - ep)
                + 3.0 * (eb - 2.0 * ep) * math.sqrt(ep)
                * math.asin(math.sqrt(ep / eb))) / (6.0 * math.pi)
    return 0.25 * (eb - 2.0 * ep) * math.sqrt(ep)


def _raw_h_scalar(eb: float, ep: float) -> float:
    poly = 0.375 * eb * eb - eb * ep + ep * ep
    if eb > ep:
        root = math.sqrt(eb - ep)
        return (8.0 * root ** 5
                + 15.0 * (math.sqrt(ep) * poly
                          * math.asin(math.sqrt(ep / eb))
                          - 0.375 * ep * (eb - 2.0 * ep) * root)) \
            / (15.0 * math.pi)
    return 0.5 * math.sqrt(ep) * poly


# -- jump sampling and pathwise simulation ------------------------------------


def _jump_scalar(eb: float, ep: float, rng: np.random.Generator) -> float:
    if eb == 0.0:
        return -ep  # support collapses: the piston hands over everything
    a = math.sqrt(eb)
    b = math.sqrt(ep)
    m = max(a, b)
    while True:
        alpha = 0.5 * math.pi * rng.random()
        if rng.random() * m <= max(a * math.cos(alpha), b):
            return eb * math.cos(alpha) ** 2 - ep


def sample_jump(pair: EnergyPair, rng: np.random.Generator) -> float:
    """One energy transfer zeta drawn from W/f for the given pair.

    Sampling runs in the angle variable (ep_out = eb cos^2 alpha), where the
    density max(sqrt(eb) cos alpha, sqrt(ep)) is bounded; zeta = ep_out - ep.
    """
    return _jump_scalar(pair.eb, pair.ep, rng)


def _jump_batch(eb: np.ndarray, ep: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """Vectorized sample_jump over aligned energy arrays."""
    a = np.sqrt(eb)
    b = np.sqrt(ep)
    m = np.maximum(a, b)
    out = (-ep).astype(float)  # rows with eb = 0 keep the full transfer
    todo = np.flatnonzero(eb > 0.0)
    while todo.size:
        alpha = 0.5 * math.pi * rng.random(todo.size)
        keep = rng.random(todo.size) * m[todo] <= np.maximum(
            a[todo] * np.cos(alpha), b[todo])
        hit = todo[keep]
        out[hit] = eb[hit] * np.cos(alpha[keep]) ** 2 - ep[hit]
        todo = todo[~keep]
    return out


class JumpLog:
    """Piecewise-constant energy path of the jump process.

    Indexing yields (time, zeta, post EnergyPair); the total energy is
    conserved exactly because only the piston energy is tracked.
    """

    def __init__(self, start: EnergyPair, times, zetas, total_time: float):
        self.start = start
        self.times = np.array(times, dtype=float)
        self.zetas = np.array(zetas, dtype=float)
        if self.times.shape != self.zetas.shape:
            raise ParameterError("times and zetas must align")
        self.total_time = float(total_time)
        self._ep_post = start.ep + np.cumsum(self.zetas)
        for arr in (self.times, self.zetas, self._ep_post):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, i: int):
        ep = float(self._ep_post[i])
        return (float(self.times[i]), float(self.zetas[i]),
                EnergyPair(eb=self.start.etotal - ep, ep=ep))

    def state_at_time(self, t: float) -> EnergyPair:
        if not 0.0 <= t <= self.total_time:
            raise ParameterError(
                f"t must lie in [0, {self.total_time!r}]; got {t!r}")
        i = int(np.searchsorted(self.times, t, side="right"))
        ep = self.start.ep if i == 0 else float(self._ep_post[i - 1])
        return EnergyPair(eb=self.start.etotal - ep, ep=ep)

    def ep_series(self) -> np.ndarray:
        return self._ep_post

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes))
        f = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(f)
            w.writerow(["t", "zeta", "eb", "ep"])
            total = self.start.etotal
            for t, z, ep in zip(self.times, self.zetas, self._ep_post):
                w.writerow([f"{t:.17g}", f"{z:.17g}",
                            f"{total - ep:.17g}", f"{ep:.17g}"])
        finally:
            if own:
                f.close()


def gillespie(start: EnergyPair, tmax: float, geom: GeometrySummary,
              rng: np.random.Generator) -> JumpLog:
    """Exact pathwise simulation of the jump process up to time tmax.

    Waiting times are exponential at the state-dependent total rate f; the
    transfers come from sample_jump.  (The billiard's own inter-collision
    times need not be exponential; this is the limiting process only.)
    """
    if tmax <= 0.0:
        raise ParameterError(f"tmax must be positive; got {tmax!r}")
    etotal = start.etotal
    pref = _prefactor(geom)
    ep = start.ep
    t = 0.0
    times, zetas = [], []
    while True:
        eb = etotal - ep
        rate = pref * _raw_f_scalar(eb, ep)
        if rate < 1e-300:
            raise NumericalError(
                f"jump rate underflow at eb={eb!r}, ep={ep!r}")
        t += rng.exponential(1.0 / rate)
        if t > tmax:
            break
        zeta = _jump_scalar(eb, ep, rng)
        times.append(t)
        zetas.append(zeta)
        ep += zeta
    return JumpLog(start, times, zetas, tmax)


def gillespie_ensemble(start: EnergyPair, tmax: float, geom: GeometrySummary,
                       rng: np.random.Generator, paths: int) -> np.ndarray:
    """Piston energies of many independent paths at time tmax.

    All paths advance jump-by-jump in lock step with vectorized draws;
    a path stops contributing once its next jump would overshoot tmax.
    """
    if paths <= 0:
        raise ParameterError(f"paths must be positive; got {paths!r}")
    if tmax <= 0.0:
        raise ParameterError(f"tmax must be positive; got {tmax!r}")
    etotal = start.etotal
    pref = _prefactor(geom)
    ep = np.full(paths, float(start.ep))
    t = np.zeros(paths)
    alive = np.arange(paths)
    while alive.size:
        eb = etotal - ep[alive]
        f, _, _ = _raw_moments(eb, ep[alive])
        t[alive] += rng.exponential(1.0 / (pref * f))
        jumping = alive[t[alive] <= tmax]
        if jumping.size:
            ep[jumping] += _jump_batch(etotal - ep[jumping], ep[jumping], rng)
        alive = jumping
    return ep


# -- master equation on an energy grid ----------------------------------------


@dataclass(frozen=True)
class EnergyGridDensity:
    """Cell probabilities for the piston energy on (0, etotal)."""

    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        edges = np.array(self.edges, dtype=float)
        probs = np.array(self.probs, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or probs.shape != (edges.size - 1,):
            raise ParameterError("need K+1 edges and K cell probabilities")
        if edges[0] != 0.0 or (np.diff(edges) <= 0.0).any():
            raise ParameterError("edges must increase from 0 to the total")
        if (probs < 0.0).any():
            raise ParameterError("cell probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ParameterError(
                f"cell probabilities must sum to 1; got {probs.sum()!r}")
        edges.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "probs", probs)

    @property
    def etotal(self) -> float:
        return float(self.edges[-1])

    @property
    def cells(self) -> int:
        return self.probs.size

    def density(self) -> np.ndarray:
        return self.probs / np.diff(self.edges)

    @classmethod
    def stationary(cls, etotal: float, cells: int) -> "EnergyGridDensity":
        """Cell-averaged stationary law, density proportional to 1/sqrt(ep)."""
        edges = np.linspace(0.0, etotal, cells + 1)
        w = np.diff(np.sqrt(edges))
        return cls(edges=edges, probs=w / w.sum())

    @classmethod
    def point_mass(cls, etotal: float, cells: int,
                   ep: float) -> "EnergyGridDensity":
        edges = np.linspace(0.0, etotal, cells + 1)
        if not 0.0 <= ep <= etotal:
            raise ParameterError(f"ep must lie in [0, {etotal!r}]; got {ep!r}")
        probs = np.zeros(cells)
        probs[min(int(np.searchsorted(edges, ep, side="right")) - 1,
                  cells - 1)] = 1.0
        return cls(edges=edges, probs=probs)


_GL12 = np.polynomial.legendre.leggauss(12)

# Unnormalized stationary cell weights: integral of 1/sqrt(2 ep) per cell.
def _stationary_weights(edges: np.ndarray) -> np.ndarray:
    return math.sqrt(2.0) * np.diff(np.sqrt(edges))


def _w_cumulative(e: np.ndarray, eb: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Integral of the kernel shape max(sqrt(e'), sqrt(e))/sqrt(e'(eb-e'))
    over e' from 0 to x, broadcast over rows (e, eb) and columns x.

    This is the angle-substitution antiderivative: the asin term is the
    branch where the incoming piston speed dominates, the sqrt term the
    branch where the outgoing one does.
    """
    x = np.clip(x, 0.0, eb)
    lo = np.minimum(x, np.minimum(e, eb))
    head = 2.0 * np.sqrt(e) * np.arcsin(np.sqrt(np.clip(lo / eb, 0.0, 1.0)))
    tail = 2.0 * np.where(
        x > e,
        np.sqrt(np.maximum(eb - np.minimum(e, eb), 0.0))
        - np.sqrt(np.maximum(eb - x, 0.0)),
        0.0)
    return head + tail


def _rate_matrix(edges: np.ndarray, pref: float):
    """Cell-to-cell jump rates with exact discrete detailed balance.

    Fluxes are quadratures of the stationary-weighted kernel over both cells
    (outer integral in u = sqrt(ep), where the stationary weight is flat);
    symmetrizing them makes the cell-averaged stationary law an exact fixed
    point regardless of cell count.
    """
    cells = edges.size - 1
    etotal = edges[-1]
    nodes, wts = _GL12
    u_edges = np.sqrt(edges)
    mid = (u_edges[1:] + u_edges[:-1]) / 2.0
    half = (u_edges[1:] - u_edges[:-1]) / 2.0
    u = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    weight = (math.sqrt(2.0) * half[:, None]
              * wts[None, :]).ravel() * pref / TWO_PI
    e = u * u
    eb = etotal - e
    cum = _w_cumulative(e[:, None], eb[:, None], edges[None, :])
    masses = np.diff(cum, axis=1) * weight[:, None]
    flux = masses.reshape(cells, nodes.size, cells).sum(axis=1)
    flux = 0.5 * (flux + flux.T)
    rates = flux / _stationary_weights(edges)[:, None]
    np.fill_diagonal(rates, 0.0)
    return rates


def master_evolve(p0: EnergyGridDensity, dt: float, steps: int,
                  geom: GeometrySummary) -> EnergyGridDensity:
    """Advance the cell probabilities by explicit conservative Euler steps.

    Gain and loss use the same cell-pair rates, so total probability is
    conserved to roundoff; dt must keep dt * max cell outflow rate below
    1/2, otherwise the update could leave the simplex.
    """
    if dt <= 0.0 or steps < 0:
        raise ParameterError("need dt > 0 and steps >= 0")
    rates = _rate_matrix(p0.edges, _prefactor(geom))
    outflow = rates.sum(axis=1)
    top = float(dt * outflow.max())
    if top >= STABILITY_FACTOR:
        raise ParameterError(
            f"dt * max cell rate = {top:g} violates the stability bound "
            f"{STABILITY_FACTOR:g}")
    p = p0.probs.copy()
    gain = rates.T
    for _ in range(steps):
        p = p + dt * (gain @ p - outflow * p)
    return EnergyGridDensity(edges=p0.edges, probs=p)
