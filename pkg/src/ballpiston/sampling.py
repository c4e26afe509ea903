"""Samplers for the invariant measures.

Flow measure (uniform position x uniform sphere), the face flux measure
(cosine-law hemisphere), the angular family h^(n) at fixed piston energy,
and the fixed-energy launch ensemble built from it.  Everything is direct
rejection sampling; no Markov chains.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import FlowState
from .errors import ParameterError, RejectionStallError
from .geometry import GeometryParams

TWO_PI = 2.0 * math.pi

# rejection guard: give up once acceptance is provably degenerate
_STALL_TRIALS = 200_000
_STALL_ACCEPTANCE = 1e-4

_ARC_CENTERS = ((0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5))


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator: PCG64 keyed by (seed, stream).

    The bit generator is pinned (not default_rng) so identical seeds give
    identical sample streams across platforms and numpy releases; parallel
    runs take distinct stream indices.
    """
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((int(seed), int(stream)))))


@dataclass(frozen=True)
class AngleCoord:
    """Incoming-form angular coordinates on the face at fixed piston energy.

    Maps to velocity (sqrt(1-2ep) cos alpha, sqrt(1-2ep) sin alpha,
    sigma sqrt(2 ep)); sigma is the piston branch.
    """

    alpha: float
    sigma: int
    ep: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < TWO_PI:
            raise ParameterError(
                f"alpha must satisfy 0 <= alpha < 2*pi; got {self.alpha!r}")
        if self.sigma not in (-1, 1):
            raise ParameterError(f"sigma must be +1 or -1; got {self.sigma!r}")
        if not 0.0 < self.ep < 0.5:
            raise ParameterError(
                f"ep must satisfy 0 < ep < 1/2; got {self.ep!r}")


def angle_to_velocity(a: AngleCoord, direction: str) -> np.ndarray:
    """Velocity of an angular coordinate.

    incoming: (vb cos a, vb sin a, sigma vp), the pre-collision form;
    outgoing: its face-exchange image (sigma vp, vb sin a, vb cos a).
    """
    vb = math.sqrt(2.0 * (0.5 - a.ep))
    vp = a.sigma * math.sqrt(2.0 * a.ep)
    c, s = math.cos(a.alpha), math.sin(a.alpha)
    if direction == "incoming":
        return np.array([vb * c, vb * s, vp])
    if direction == "outgoing":
        return np.array([vp, vb * s, vb * c])
    raise ParameterError(
        f"direction must be 'incoming' or 'outgoing'; got {direction!r}")


def _stall_check(trials: int, accepts: int, what: str) -> None:
    if trials >= _STALL_TRIALS and accepts < _STALL_ACCEPTANCE * trials:
        raise RejectionStallError(
            f"{what} acceptance {accepts / trials:.3g} fell below "
            f"{_STALL_ACCEPTANCE:g} after {trials} proposals; "
            "configuration space is nearly degenerate")


def _outside_discs(x: np.ndarray, y: np.ndarray, rho2: float) -> np.ndarray:
    ok = np.ones(x.shape, dtype=bool)
    for cx, cy in _ARC_CENTERS:
        ok &= (x - cx) ** 2 + (y - cy) ** 2 >= rho2
    return ok


def sample_flow_batch(params: GeometryParams, rng: np.random.Generator,
                      size: int, return_trials: bool = False):
    """size states from the flow measure as a (size, 6) array of (q, v)."""
    if size <= 0:
        raise ParameterError(f"size must be positive; got {size!r}")
    rho2 = params.rho ** 2
    smin, smax = params.slot_min, params.slot_max
    out = np.empty((size, 3))
    got = 0
    trials = 0
    chunk = max(4 * size, 4096)
    while got < size:
        q1 = rng.random(chunk) - 0.5
        q2 = rng.random(chunk) - 0.5
        q3 = smin + (smax - smin) * rng.random(chunk)
        ok = (q1 <= q3) & _outside_discs(q1, q2, rho2)
        hits = np.nonzero(ok)[0]
        take = min(len(hits), size - got)
        # count proposals only up to the last kept acceptance, so that
        # size/trials is the unbiased acceptance-ratio estimator
        trials += int(hits[take - 1]) + 1 if take < len(hits) else chunk
        if take:
            idx = hits[:take]
            out[got:got + take, 0] = q1[idx]
            out[got:got + take, 1] = q2[idx]
            out[got:got + take, 2] = q3[idx]
            got += take
        _stall_check(trials, got, "flow position sampler")
    v = rng.normal(size=(size, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    states = np.hstack([out, v])
    return (states, trials) if return_trials else states


def sample_flow(params: GeometryParams, rng: np.random.Generator) -> FlowState:
    """One state from the flow measure: q uniform in the domain, v uniform
    on the unit sphere."""
    row = sample_flow_batch(params, rng, 1)[0]
    return FlowState(row[:3], row[3:])


def _face_positions(params: GeometryParams, rng: np.random.Generator,
                    size: int, count_trials: bool = False):
    """(q1, q2) uniform on the projected face region; q3 = q1 implied."""
    rho2 = params.rho ** 2
    lo = params.slot_min
    hi = params.slot_min + params.delta  # face ends at the slot mouth
    half = 0.5 * params.eta
    out = np.empty((size, 2))
    got = 0
    trials = 0
    chunk = max(4 * size, 4096)
    while got < size:
        x = lo + (hi - lo) * rng.random(chunk)
        y = half * (2.0 * rng.random(chunk) - 1.0)
        ok = _outside_discs(x, y, rho2)
        hits = np.nonzero(ok)[0]
        take = min(len(hits), size - got)
        trials += int(hits[take - 1]) + 1 if take < len(hits) else chunk
        if take:
            idx = hits[:take]
            out[got:got + take, 0] = x[idx]
            out[got:got + take, 1] = y[idx]
            got += take
        _stall_check(trials, got, "face position sampler")
    return (out, trials) if count_trials else out


def sample_bp_flux_batch(params: GeometryParams, rng: np.random.Generator,
                         size: int) -> np.ndarray:
    """size outgoing face states from the flux measure, as (size, 6).

    Positions are uniform over the face; velocities follow the cosine law
    (density proportional to v.n on the outgoing hemisphere, envelope 1).
    """
    if size <= 0:
        raise ParameterError(f"size must be positive; got {size!r}")
    pos = _face_positions(params, rng, size)
    v = np.empty((size, 3))
    got = 0
    trials = 0
    chunk = max(8 * size, 4096)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    while got < size:
        u = rng.normal(size=(chunk, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        flux = (u[:, 2] - u[:, 0]) * inv_sqrt2
        ok = rng.random(chunk) < flux
        trials += chunk
        take = min(int(ok.sum()), size - got)
        if take:
            v[got:got + take] = u[np.nonzero(ok)[0][:take]]
            got += take
        _stall_check(trials, got, "flux velocity sampler")
    states = np.empty((size, 6))
    states[:, 0] = pos[:, 0]
    states[:, 1] = pos[:, 1]
    states[:, 2] = pos[:, 0]
    states[:, 3:] = v
    return states


def sample_bp_flux(params: GeometryParams,
                   rng: np.random.Generator) -> FlowState:
    """One outgoing state on the face from the flux measure."""
    row = sample_bp_flux_batch(params, rng, 1)[0]
    return FlowState(row[:3], row[3:])


def _alpha_cells(ep: float, n: int):
    """Piecewise-constant envelope of the h^(n) density.

    64 equal alpha cells per sigma branch over [0, 2pi); the density is
    monotone inside each cell, so cell maxima sit at the edges and the
    envelope is exact.  Branch order: sigma = +1 cells, then sigma = -1.
    """
    a = math.sqrt(2.0 * (0.5 - ep))
    b = math.sqrt(2.0 * ep)
    edges = np.linspace(0.0, TWO_PI, 65)
    base = a * np.cos(edges)
    heights = []
    for sgn in (1.0, -1.0):
        f = np.maximum(base - sgn * b, 0.0)
        if n == 0:
            h = ((f[:-1] > 0.0) | (f[1:] > 0.0)).astype(float)
        else:
            h = np.maximum(f[:-1], f[1:]) ** n
        heights.append(h)
    return edges, np.concatenate(heights), a, b


def hn_density(ep: float, n: int):
    """Unnormalized density of h^(n) as a vectorized evaluator f(alpha, sigma).

    f = (sqrt(eps_B) cos alpha - sigma sqrt(eps_P))_+^n up to the velocity
    scale; n = 0 gives the indicator of the n = 1 support.
    """
    if not 0.0 < ep < 0.5:
        raise ParameterError(f"ep must satisfy 0 < ep < 1/2; got {ep!r}")
    if n < 0 or n != int(n):
        raise ParameterError(f"n must be a nonnegative integer; got {n!r}")
    a = math.sqrt(2.0 * (0.5 - ep))
    b = math.sqrt(2.0 * ep)
    n = int(n)

    def density(alpha, sigma):
        base = np.maximum(a * np.cos(np.asarray(alpha, dtype=float))
                          - sigma * b, 0.0)
        return (base > 0.0).astype(float) if n == 0 else base ** n

    return density


def sample_alpha_batch(ep: float, n: int, rng: np.random.Generator,
                       size: int):
    """size draws from h^(n) at fixed ep; returns (alpha, sigma) arrays.

    h^(n)(alpha, sigma) is proportional to
    (sqrt(eps_B) cos alpha - sigma sqrt(eps_P))_+^n; n = 0 means uniform
    on the support of the n = 1 density.
    """
    if not 0.0 < ep < 0.5:
        raise ParameterError(f"ep must satisfy 0 < ep < 1/2; got {ep!r}")
    if n < 0 or n != int(n):
        raise ParameterError(f"n must be a nonnegative integer; got {n!r}")
    if size <= 0:
        raise ParameterError(f"size must be positive; got {size!r}")
    n = int(n)
    edges, heights, a, b = _alpha_cells(ep, n)
    width = TWO_PI / 64.0
    weights = heights * width
    probs = weights / weights.sum()
    alphas = np.empty(size)
    sigmas = np.empty(size)
    got = 0
    trials = 0
    while got < size:
        chunk = max(int(1.5 * (size - got)) + 64, 256)
        idx = rng.choice(128, size=chunk, p=probs)
        al = edges[idx % 64] + width * rng.random(chunk)
        sg = np.where(idx < 64, 1.0, -1.0)
        f = np.maximum(a * np.cos(al) - sg * b, 0.0)
        f = (f > 0.0).astype(float) if n == 0 else f ** n
        ok = rng.random(chunk) * heights[idx] < f
        trials += chunk
        take = min(int(ok.sum()), size - got)
        if take:
            sel = np.nonzero(ok)[0][:take]
            alphas[got:got + take] = al[sel]
            sigmas[got:got + take] = sg[sel]
            got += take
        _stall_check(trials, got, "angular sampler")
    return alphas, sigmas


def sample_alpha(ep: float, n: int, rng: np.random.Generator) -> AngleCoord:
    """One draw from the angular family h^(n) at piston energy ep."""
    alpha, sigma = sample_alpha_batch(ep, n, rng, 1)
    return AngleCoord(alpha=float(alpha[0]), sigma=int(sigma[0]), ep=ep)


def sample_shell_flux_batch(params: GeometryParams, ep: float, n: int,
                            rng: np.random.Generator, size: int) -> np.ndarray:
    """Launch states at piston energy exactly ep, as (size, 6).

    Face positions from the flux measure; (alpha, sigma) from h^(n); the
    velocity is the time-reversal image of the incoming form, which lies on
    the outgoing hemisphere with the piston energy unchanged.  With n = 1
    this is the stationary ensemble of the face-collision process.
    """
    if size <= 0:
        raise ParameterError(f"size must be positive; got {size!r}")
    pos = _face_positions(params, rng, size)
    alpha, sigma = sample_alpha_batch(ep, n, rng, size)
    a = math.sqrt(2.0 * (0.5 - ep))
    b = math.sqrt(2.0 * ep)
    states = np.empty((size, 6))
    states[:, 0] = pos[:, 0]
    states[:, 1] = pos[:, 1]
    states[:, 2] = pos[:, 0]
    states[:, 3] = -a * np.cos(alpha)
    states[:, 4] = -a * np.sin(alpha)
    states[:, 5] = -sigma * b
    return states


def sample_shell_flux(params: GeometryParams, ep: float, n: int,
                      rng: np.random.Generator) -> FlowState:
    """One launch state at piston energy exactly ep (see the batch form)."""
    row = sample_shell_flux_batch(params, ep, n, rng, 1)[0]
    return FlowState(row[:3], row[3:])
