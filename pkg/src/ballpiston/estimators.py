"""Mean free time and angular distribution estimators.

Empirical counterparts of the closed-form geometry quantities: per-kind mean
free times from a collision log, conditional face-to-face times from batched
launches, and binned angular distributions with a KL distance to the
stationary family.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _fast
from .dynamics import KIND_LABELS, CollisionLog, kind_class, _geo_scalars
from .errors import (CornerAmbiguityError, EventRateCapError,
                     InsufficientDataError, NoEventError, ParameterError)
from .geometry import GeometryParams
from .sampling import (hn_density, sample_alpha, sample_shell_flux_batch,
                       _face_positions)

__all__ = [
    "Estimate",
    "Histogram",
    "build_histogram",
    "estimate_cond_mft",
    "estimate_mft",
    "kl_divergence",
    "paper_delta_grid",
    "paper_energy_grid",
    "relaxation_experiment",
]

# Batch count for time-series standard errors; gaps along one trajectory are
# correlated, so plain std/sqrt(n) would be too optimistic.
_MFT_BATCHES = 100

# Grace band for deciding whether an angle lies inside the admissible
# support; anything further out is counted as out-of-support.
SUPPORT_TOL = 1e-9

_FAMILY_LABELS = ("bp", "bw", "pw", "total")


@dataclass(frozen=True)
class Estimate:
    """A scalar estimate with its standard error and sample size."""

    value: float
    standard_error: float
    sample_count: int


def _batch_means_se(values: np.ndarray) -> float:
    """Standard error of the mean via batch means over a correlated series."""
    nb = min(_MFT_BATCHES, values.size)
    if nb < 2:
        return float("nan")
    means = np.array([chunk.mean() for chunk in np.array_split(values, nb)])
    return float(means.std(ddof=1) / math.sqrt(nb))


def estimate_mft(log: CollisionLog, kinds=None) -> dict:
    """Per-kind mean free times from a collision log.

    Returns a dict keyed by event kind ("bp", "bw0", ..., "pw+"), by family
    ("bw", "pw"), and by "total".  Each value is total elapsed time divided
    by the event count of that key, with a batch-means standard error taken
    over the inter-event gaps.  Keys with fewer than two events are omitted
    unless explicitly requested, in which case InsufficientDataError is
    raised.
    """
    if kinds is None:
        requested = KIND_LABELS + ("bw", "pw", "total")
        explicit = False
    else:
        requested = tuple(kinds)
        explicit = True
        for key in requested:
            if key not in KIND_LABELS and key not in _FAMILY_LABELS:
                raise ParameterError(f"unknown event kind {key!r}")

    labels = np.array([KIND_LABELS[k] for k in log.kinds])
    classes = np.array([kind_class(lab) for lab in labels])
    times = log.cumulative_times

    out = {}
    for key in requested:
        if key == "total":
            mask = np.ones(labels.shape, dtype=bool)
        elif key in ("bw", "pw"):
            mask = classes == key
        else:
            mask = labels == key
        t_k = times[mask]
        if t_k.size < 2:
            if explicit:
                raise InsufficientDataError(
                    f"need at least 2 events of kind {key!r}; got {t_k.size}")
            continue
        gaps = np.diff(t_k)
        out[key] = Estimate(value=float(log.total_time / t_k.size),
                            standard_error=_batch_means_se(gaps),
                            sample_count=int(t_k.size))
    if not out:
        raise InsufficientDataError("log has no kind with 2 or more events")
    return out


# -- conditional mean free time ---------------------------------------------

# Cells for the piecewise-constant envelope over the dispersing part of the
# face-flux energy density.
_EP_ENV_CELLS = 32

_INV_2SQRT2 = 1.0 / (2.0 * math.sqrt(2.0))


def _ep_density_parts(e: np.ndarray):
    """Split g(e)/sqrt(2e) on (0, 1/4) into decreasing + increasing parts."""
    e = np.asarray(e, dtype=float)
    dec = np.sqrt(0.5 - 2.0 * e) / (math.pi * np.sqrt(2.0 * e))
    inc = np.arcsin(np.sqrt(e / (0.5 - e))) / (math.pi * math.sqrt(2.0))
    return dec, inc


def _ep_density(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    out = np.full(e.shape, _INV_2SQRT2)
    low = e < 0.25
    if low.any():
        dec, inc = _ep_density_parts(e[low])
        out[low] = dec + inc
    return out


def _sample_ep_window(lo: float, hi: float, rng: np.random.Generator,
                      size: int) -> np.ndarray:
    """Draw face-crossing energies from the flux marginal on (lo, hi).

    The density is g(e)/sqrt(2e): constant above 1/4, and below 1/4 a sum of
    a decreasing and an increasing term, so each envelope cell [l, r] can use
    the exact bound dec(l) + inc(r).
    """
    edges = [np.array([], dtype=float)]
    if lo < 0.25:
        edges.append(np.linspace(lo, min(hi, 0.25), _EP_ENV_CELLS + 1))
    if hi > 0.25:
        edges.append(np.array([max(lo, 0.25), hi]))
    edges = np.concatenate(edges)
    lefts, rights = edges[:-1], edges[1:]
    heights = np.full(lefts.shape, _INV_2SQRT2)
    low = lefts < 0.25
    if low.any():
        dec, _ = _ep_density_parts(lefts[low])
        _, inc = _ep_density_parts(np.minimum(rights[low],
                                              np.nextafter(0.25, 0.0)))
        heights[low] = dec + inc
    probs = heights * (rights - lefts)
    probs = probs / probs.sum()

    out = np.empty(size)
    have = 0
    while have < size:
        m = max(size - have, 1024)
        idx = rng.choice(lefts.size, size=m, p=probs)
        e = lefts[idx] + (rights[idx] - lefts[idx]) * rng.random(m)
        keep = e[rng.random(m) * heights[idx] < _ep_density(e)]
        take = min(keep.size, size - have)
        out[have:have + take] = keep[:take]
        have += take
    return out


def _first_bp_times(params: GeometryParams, starts: np.ndarray,
                    max_events: int):
    """First ball-piston hit time for each start row, via the batched core."""
    n = starts.shape[0]
    out_t = np.empty(n)
    out_v = np.empty((n, 3))
    out_status = np.empty(n, dtype=np.int64)
    _fast.batch_first_bp(*_geo_scalars(params), starts, max_events,
                         out_t, out_v, out_status)
    if (out_status != _fast.STOP_BP).any():
        bad = int(np.flatnonzero(out_status != _fast.STOP_BP)[0])
        code = int(out_status[bad])
        if code == _fast.FAIL_CORNER:
            raise CornerAmbiguityError(
                f"trajectory {bad} reached an ambiguous corner state")
        if code == _fast.FAIL_RATE_CAP:
            raise EventRateCapError(
                f"trajectory {bad} exceeded the event rate cap")
        if code == _fast.FAIL_NO_EVENT:
            raise NoEventError(f"trajectory {bad} found no next event")
        raise InsufficientDataError(
            f"trajectory {bad} exhausted {max_events} events before "
            f"reaching the piston face")
    return out_t, out_v


def estimate_cond_mft(params: GeometryParams, ep: float, window: float,
                      samples: int, rng: np.random.Generator, *,
                      max_events: int = 50_000_000) -> Estimate:
    """Mean time from a stationary face crossing at energy ep back to the face.

    Launches `samples` states from the fixed-energy stationary flux law and
    records each first return to the ball-piston face.  With window = 0 every
    launch uses energy ep exactly; with window > 0 the launch energies are
    drawn from the face-flux energy marginal restricted to
    (ep - window/2, ep + window/2), which weights the window exactly as the
    face flux does.
    """
    if window < 0.0:
        raise ParameterError(f"window must be nonnegative; got {window!r}")
    lo, hi = ep - window / 2.0, ep + window / 2.0
    if not (0.0 < lo and hi < 0.5 and ep > 0.0):
        raise ParameterError(
            f"energy window ({lo!r}, {hi!r}) must lie inside (0, 1/2)")
    if samples < 1000:
        raise ParameterError(f"need at least 1000 samples; got {samples!r}")

    if window == 0.0:
        starts = sample_shell_flux_batch(params, ep, 1, rng, samples)
    else:
        eps = _sample_ep_window(lo, hi, rng, samples)
        q = _face_positions(params, rng, samples)
        starts = np.empty((samples, 6))
        starts[:, 0] = q[:, 0]
        starts[:, 1] = q[:, 1]
        starts[:, 2] = q[:, 0]
        for i in range(samples):
            coord = sample_alpha(eps[i], 1, rng)
            a = math.sqrt(2.0 * (0.5 - coord.ep))
            b = math.sqrt(2.0 * coord.ep)
            starts[i, 3] = -a * math.cos(coord.alpha)
            starts[i, 4] = -a * math.sin(coord.alpha)
            starts[i, 5] = -coord.sigma * b

    times, _ = _first_bp_times(params, starts, max_events)
    return Estimate(value=float(times.mean()),
                    standard_error=float(times.std(ddof=1)
                                         / math.sqrt(times.size)),
                    sample_count=int(times.size))


# -- angular histograms ------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    """Binned angular distribution over the admissible (alpha, sigma) support.

    Angles are folded to (-pi, pi]; each branch holds uniform bins over
    [-u*, u*] where u* bounds the branch support (pi for the full circle).
    `total` counts the in-support samples, so the per-branch counts sum to it.
    """

    ep: float
    sigmas: tuple
    edges: tuple
    counts: tuple
    total: int
    out_of_support: int

    def densities(self) -> tuple:
        """Per-branch empirical probability densities (counts / total / width)."""
        if self.total == 0:
            return tuple(np.zeros(c.size) for c in self.counts)
        return tuple(c / (self.total * np.diff(e))
                     for c, e in zip(self.counts, self.edges))


def _branch_supports(ep: float):
    """(sigma, u*) per admissible branch; sigma = +1 branch first if present."""
    if ep < 0.25:
        r = math.sqrt(ep / (0.5 - ep))
        return ((1, math.acos(r)), (-1, math.pi - math.acos(r)))
    return ((-1, math.pi),)


def _histogram_from_arrays(alpha: np.ndarray, sigma: np.ndarray, ep: float,
                           bins: int) -> Histogram:
    folded = np.mod(alpha + math.pi, 2.0 * math.pi) - math.pi
    supports = _branch_supports(ep)
    edges, counts = [], []
    used = 0
    for sgn, ustar in supports:
        e = np.linspace(-ustar, ustar, bins + 1)
        inside = (sigma == sgn) & (np.abs(folded) <= ustar + SUPPORT_TOL)
        c, _ = np.histogram(np.clip(folded[inside], -ustar, ustar), bins=e)
        edges.append(e)
        counts.append(c)
        used += int(inside.sum())
    return Histogram(ep=float(ep), sigmas=tuple(s for s, _ in supports),
                     edges=tuple(edges), counts=tuple(counts),
                     total=used, out_of_support=int(alpha.size - used))


def build_histogram(samples, bins: int = 1000, ep=None) -> Histogram:
    """Histogram a collection of AngleCoord samples over the branch supports.

    All samples must share the same energy (it fixes the support); an empty
    input is valid when `ep` is given explicitly.  Samples more than 1e-9
    outside their branch support are tallied in `out_of_support` rather than
    binned.
    """
    if bins < 1:
        raise ParameterError(f"bins must be positive; got {bins!r}")
    samples = list(samples)
    if not samples:
        if ep is None:
            raise ParameterError("empty input needs an explicit ep")
        if not 0.0 < ep < 0.5:
            raise ParameterError(f"ep must satisfy 0 < ep < 1/2; got {ep!r}")
        return _histogram_from_arrays(np.empty(0), np.empty(0, dtype=int),
                                      ep, bins)
    eps = np.array([c.ep for c in samples])
    if ep is None:
        ep = float(eps[0])
    if np.abs(eps - ep).max() > 1e-12:
        raise ParameterError("samples mix different energies; the support "
                             "is only defined for a single ep")
    alpha = np.array([c.alpha for c in samples])
    sigma = np.array([c.sigma for c in samples])
    return _histogram_from_arrays(alpha, sigma, ep, bins)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _reference_masses(h: Histogram, reference) -> list:
    """Unnormalized bin masses of `reference` over each branch's bins."""
    parts = []
    for sgn, e in zip(h.sigmas, h.edges):
        mid = (e[1:] + e[:-1]) / 2.0
        half = (e[1:] - e[:-1]) / 2.0
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = np.asarray(reference(nodes.ravel(), sgn),
                          dtype=float).reshape(nodes.shape)
        parts.append(half * (vals * _GL_WEIGHTS[None, :]).sum(axis=1))
    return parts


def kl_divergence(h: Histogram, reference) -> float:
    """KL divergence of a histogram from an analytic density.

    `reference(alpha, sigma)` may be unnormalized and positive on the
    support; its bin masses are computed by 8-point Gauss-Legendre quadrature
    and normalized over the histogram's bins.  Empty bins contribute zero; a
    populated bin where the reference is nonpositive is an error.
    """
    if h.total == 0:
        raise InsufficientDataError("histogram holds no in-support samples")
    p = np.concatenate([c / h.total for c in h.counts])
    q = np.concatenate(_reference_masses(h, reference))
    qsum = q.sum()
    if not np.isfinite(qsum) or qsum <= 0.0:
        raise ParameterError("reference has no mass on the support")
    q = q / qsum
    populated = p > 0.0
    if (q[populated] <= 0.0).any():
        raise ParameterError("reference is nonpositive on a populated bin")
    return float(np.sum(p[populated] * np.log(p[populated] / q[populated])))


def relaxation_experiment(params: GeometryParams, ep: float, n: int,
                          samples: int, bins: int, rng: np.random.Generator,
                          *, max_events: int = 50_000_000):
    """Launch h^(n) states and histogram the first-return face angles.

    Returns (Histogram, kl) where kl is the divergence of the observed
    incoming (alpha, sigma) distribution from the stationary law h^(1) at the
    same energy.  Launch energies are preserved exactly along the flow, so
    the returns land on the same support.
    """
    starts = sample_shell_flux_batch(params, ep, n, rng, samples)
    _, v_in = _first_bp_times(params, starts, max_events)
    alpha = np.mod(np.arctan2(v_in[:, 1], v_in[:, 0]), 2.0 * math.pi)
    sigma = np.where(v_in[:, 2] >= 0.0, 1, -1)
    hist = _histogram_from_arrays(alpha, sigma, ep, bins)
    return hist, kl_divergence(hist, hn_density(ep, 1))


# -- shared evaluation grids --------------------------------------------------


def paper_energy_grid() -> np.ndarray:
    """Energy grid used in the scan figures: a uniform comb plus dyadic
    refinements toward both endpoints (59 values)."""
    comb = np.arange(1, 50) / 100.0
    dyadic = 0.005 * 0.5 ** np.arange(5)
    return np.sort(np.concatenate([comb, dyadic, 0.5 - dyadic]))


def paper_delta_grid() -> np.ndarray:
    """Slot half-gap values used for the cross-delta comparisons."""
    return np.array([0.325, 0.175, 0.0125])
