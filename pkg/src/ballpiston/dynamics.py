"""Event-driven microscopic flow.

Exact next-event computation (ball-arc, ball-piston, piston-wall), elastic
reflection laws, and deterministic trajectory simulation producing collision
logs.  The compiled stepping core lives in _fast; this module owns
validation, the error taxonomy and serialization.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import _fast
from .errors import (
    CornerAmbiguityError,
    EventRateCapError,
    NoEventError,
    ParameterError,
    SurfaceMismatchError,
)
from .geometry import GeometryParams, contains

KIND_LABELS = ("bp", "bw0", "bw1", "bw2", "bw3", "pw-", "pw+")
_KIND_CODE = {label: code for code, label in enumerate(KIND_LABELS)}
_ARC_CENTERS = ((0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5))

UNIT_TOL = 1e-12   # |v|^2 - 1 allowed at entry
FACE_TOL = 1e-9    # |q1 - q3| allowed when applying a face exchange


def kind_class(label: str) -> str:
    """Collapse an event label to its surface family: bp, bw or pw."""
    return label[:2]


@dataclass(frozen=True, eq=False)
class FlowState:
    """A phase point: position q = (q1, q2, q3) and unit velocity v."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float).reshape(3).copy()
        v = np.array(self.v, dtype=float).reshape(3).copy()
        if not (np.isfinite(q).all() and np.isfinite(v).all()):
            raise ParameterError("state coordinates must be finite")
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def ep(self) -> float:
        """Piston kinetic energy v3^2 / 2."""
        return 0.5 * self.v[2] ** 2

    @property
    def eb(self) -> float:
        """Ball kinetic energy (v1^2 + v2^2) / 2."""
        return 0.5 * (self.v[0] ** 2 + self.v[1] ** 2)


@dataclass(frozen=True)
class CollisionEvent:
    """One collision: flight time since the previous event, surface kind,
    and the states immediately before/after the reflection."""

    time: float
    kind: str
    state_pre: FlowState
    state_post: FlowState


class CollisionLog:
    """Columnar record of a simulated trajectory.

    Events are stored as parallel arrays (flight times, kind codes,
    post-collision states); CollisionEvent objects are materialized on
    demand through indexing or the events property.
    """

    def __init__(self, initial, times, kinds, posts, total_time,
                 stop_reason, energy_drift):
        self.initial = initial
        self.times = times
        self.kinds = kinds
        self.posts = posts
        self.total_time = total_time
        self.stop_reason = stop_reason
        self.energy_drift = energy_drift

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> CollisionEvent:
        n = len(self.times)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        q = self.posts[i, :3]
        v_pre = self.initial.v if i == 0 else self.posts[i - 1, 3:]
        return CollisionEvent(
            time=float(self.times[i]),
            kind=KIND_LABELS[self.kinds[i]],
            state_pre=FlowState(q, v_pre),
            state_post=FlowState(q, self.posts[i, 3:]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def events(self):
        """All events as a list; prefer the columnar arrays for long logs."""
        return list(self)

    @property
    def counts(self) -> dict:
        c = np.bincount(self.kinds, minlength=len(KIND_LABELS))
        return {label: int(c[code]) for code, label in enumerate(KIND_LABELS)}

    @property
    def cumulative_times(self) -> np.ndarray:
        return np.cumsum(self.times)

    def final_state(self) -> FlowState:
        if len(self.times) == 0:
            return self.initial
        return FlowState(self.posts[-1, :3], self.posts[-1, 3:])

    def state_at_time(self, t: float) -> FlowState:
        """Free-flight interpolation of the trajectory at absolute time t."""
        if not 0.0 <= t <= self.total_time:
            raise ParameterError(
                f"t must lie in [0, {self.total_time!r}]; got {t!r}")
        ct = self.cumulative_times
        i = int(np.searchsorted(ct, t, side="right")) - 1
        if i < 0:
            s = self.initial
            return FlowState(s.q + t * s.v, s.v)
        v = self.posts[i, 3:]
        return FlowState(self.posts[i, :3] + (t - ct[i]) * v, v)

    def to_csv(self, path_or_file) -> None:
        """Write event_index, kind, flight_time, post-collision q and v,
        cumulative_time; one row per event."""
        own = isinstance(path_or_file, (str, os.PathLike))
        f = open(path_or_file, "w") if own else path_or_file
        try:
            f.write("event_index,kind,flight_time,"
                    "q1,q2,q3,v1,v2,v3,cumulative_time\n")
            ct = 0.0
            for i in range(len(self.times)):
                ct += self.times[i]
                p = self.posts[i]
                f.write("%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                        % (i, KIND_LABELS[self.kinds[i]], self.times[i],
                           p[0], p[1], p[2], p[3], p[4], p[5], ct))
        finally:
            if own:
                f.close()


def _geo_scalars(params: GeometryParams):
    return (params.rho, params.rho * params.rho,
            params.slot_min, params.slot_max, 0.5 * params.eta)


def _check_state(params: GeometryParams, s: FlowState, where: str) -> None:
    speed2 = float(s.v @ s.v)
    if abs(speed2 - 1.0) > UNIT_TOL:
        raise ParameterError(
            f"{where}: |v|^2 must equal 1 within {UNIT_TOL:g}; got {speed2!r}")
    if not contains(params, s.q):
        raise ParameterError(f"{where}: q={s.q.tolist()} is outside the domain")


def next_event(params: GeometryParams, s: FlowState):
    """Flight time and kind of the first collision ahead of s.

    Returns (dt, kind) with kind one of KIND_LABELS.  Raises NoEventError
    when no forward crossing exists (numerically corrupted state) and
    CornerAmbiguityError when two candidates coincide within tolerance.
    """
    _check_state(params, s, "next_event")
    rho, rho2, smin, smax, eta_half = _geo_scalars(params)
    dt, kind, sep = _fast.next_event_core(
        rho2, smin, smax, eta_half,
        s.q[0], s.q[1], s.q[2], s.v[0], s.v[1], s.v[2])
    if kind < 0:
        raise NoEventError(
            f"no forward event from q={s.q.tolist()}, v={s.v.tolist()}")
    if sep < _fast.T_TOL * max(1.0, dt):
        raise CornerAmbiguityError(
            f"two candidate events within {sep:g} of dt={dt!r} "
            f"from q={s.q.tolist()}, v={s.v.tolist()}")
    return float(dt), KIND_LABELS[kind]


def apply_event(s: FlowState, kind: str) -> FlowState:
    """Outgoing state after the reflection law of the named surface.

    The state must already sit on that surface; inconsistencies that are
    checkable without geometry parameters raise SurfaceMismatchError.
    """
    code = _KIND_CODE.get(kind)
    if code is None:
        raise ParameterError(f"unknown event kind {kind!r}")
    q, v = s.q, s.v
    if code == _fast.BP:
        if abs(q[0] - q[2]) > FACE_TOL * max(1.0, abs(q[2])):
            raise SurfaceMismatchError(
                f"not on the face: q1={q[0]!r} vs q3={q[2]!r}")
        if not v[0] > v[2]:
            raise SurfaceMismatchError(
                "face exchange requires approaching relative velocity v1 > v3")
        return FlowState(q, (v[2], v[1], v[0]))
    if code <= 4:
        cx, cy = _ARC_CENTERS[code - 1]
        wx, wy = q[0] - cx, q[1] - cy
        r = float(np.hypot(wx, wy))
        if r == 0.0:
            raise SurfaceMismatchError(f"state at the center of arc {kind}")
        nx, ny = wx / r, wy / r
        d = v[0] * nx + v[1] * ny
        if d >= 0.0:
            raise SurfaceMismatchError(
                f"arc {kind} approached from inside or receding (v.n={d!r})")
        return FlowState(q, (v[0] - 2.0 * d * nx, v[1] - 2.0 * d * ny, v[2]))
    if code == _fast.PW_LO:
        if not v[2] < 0.0:
            raise SurfaceMismatchError("left slot end requires v3 < 0")
    else:
        if not v[2] > 0.0:
            raise SurfaceMismatchError("right slot end requires v3 > 0")
    return FlowState(q, (v[0], v[1], -v[2]))


_STOP_LABEL = {
    _fast.STOP_EVENTS: "max_events",
    _fast.STOP_BP: "max_bp_events",
    _fast.STOP_TIME: "max_time",
}


def _raise_run_failure(status: int, fstate, istate) -> None:
    q = fstate[0:3].tolist()
    v = fstate[3:6].tolist()
    ctx = (f"after {int(istate[0])} events at t={fstate[6]!r}: "
           f"q={q}, v={v}")
    if status == _fast.FAIL_NO_EVENT:
        raise NoEventError("no forward event " + ctx)
    if status == _fast.FAIL_CORNER:
        raise CornerAmbiguityError("corner-ambiguous event " + ctx)
    if status == _fast.FAIL_RATE_CAP:
        raise EventRateCapError(
            f"more than {_fast.CAP_EVENTS} events within a flight window of "
            f"{_fast.CAP_WINDOW:g} " + ctx)
    raise AssertionError(f"unexpected status {status}")


def simulate(params: GeometryParams, s0: FlowState, *,
             max_bp_events: int | None = None,
             max_events: int | None = None,
             max_time: float | None = None) -> CollisionLog:
    """Run the event loop from s0 until the first stop criterion fires.

    The run is deterministic in (params, s0, stop).  total_time is the sum
    of all flight times in the log; when stopping on max_time the final
    event is included, so total_time may overshoot max_time by one flight.
    """
    if max_bp_events is None and max_events is None and max_time is None:
        raise ParameterError("at least one stop criterion is required")
    _check_state(params, s0, "simulate")
    rho, rho2, smin, smax, eta_half = _geo_scalars(params)

    mbp = np.int64(max_bp_events) if max_bp_events is not None else np.int64(2**62)
    mev = np.int64(max_events) if max_events is not None else np.int64(2**62)
    mt = float(max_time) if max_time is not None else np.inf
    if mbp <= 0 or mev <= 0 or mt <= 0:
        raise ParameterError("stop criteria must be positive")

    fstate = np.zeros(9)
    fstate[0:3] = s0.q
    fstate[3:6] = s0.v
    istate = np.zeros(3, dtype=np.int64)

    chunks = []
    chunk = 1 << 16
    if max_events is not None:
        chunk = min(chunk, max_events)
    while True:
        times = np.empty(chunk)
        kinds = np.empty(chunk, dtype=np.int8)
        posts = np.empty((chunk, 6))
        n, status = _fast.run_fill(rho, rho2, smin, smax, eta_half,
                                   fstate, istate, mev, mbp, mt,
                                   times, kinds, posts)
        if n:
            chunks.append((times[:n], kinds[:n], posts[:n]))
        if status == _fast.STOP_CAP:
            chunk = min(chunk * 2, 1 << 21)
            continue
        if status < 0:
            _raise_run_failure(status, fstate, istate)
        stop_reason = _STOP_LABEL[status]
        break

    if chunks:
        times = np.concatenate([c[0] for c in chunks])
        kinds = np.concatenate([c[1] for c in chunks])
        posts = np.concatenate([c[2] for c in chunks])
    else:  # pragma: no cover - stop criteria must be positive
        times = np.empty(0)
        kinds = np.empty(0, dtype=np.int8)
        posts = np.empty((0, 6))
    return CollisionLog(
        initial=s0,
        times=times,
        kinds=kinds,
        posts=posts,
        total_time=float(fstate[6]),
        stop_reason=stop_reason,
        energy_drift=float(fstate[8]),
    )


def oracle_advance(params: GeometryParams, s: FlowState, T: float,
                   dt: float) -> FlowState:
    """Advance by time T with fixed steps and bisection-refined crossings.

    Brute-force cross-check for next_event/apply_event, used only in tests.
    Detection is by sign change of the boundary indicator functions at step
    ends, so a double crossing inside one step is missed; choose dt small
    against the free path.
    """
    if dt > 1e-4:
        raise ParameterError(f"dt must satisfy dt <= 1e-4; got {dt!r}")
    _check_state(params, s, "oracle_advance")
    rho, rho2, smin, smax, eta_half = _geo_scalars(params)
    del eta_half  # face extent is implied by the disc indicators

    def indicators(q):
        vals = np.empty(7)
        for i, (cx, cy) in enumerate(_ARC_CENTERS):
            vals[i] = (q[0] - cx) ** 2 + (q[1] - cy) ** 2 - rho2
        vals[4] = q[2] - q[0]
        vals[5] = q[2] - smin
        vals[6] = smax - q[2]
        return vals

    q = np.array(s.q, dtype=float)
    v = np.array(s.v, dtype=float)
    t = 0.0
    while t < T - 1e-15:
        h = min(dt, T - t)
        qn = q + h * v
        vals = indicators(qn)
        if (vals >= 0.0).all():
            q = qn
            t += h
            continue
        # refine each crossed indicator; the earliest one is the event
        tc_best, idx_best = np.inf, -1
        start = indicators(q)
        for idx in np.nonzero(vals < 0.0)[0]:
            if start[idx] <= 0.0:
                continue  # started on/behind this surface; not a new crossing
            lo, hi = 0.0, h
            fn = lambda tau: indicators(q + tau * v)[idx]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if fn(mid) >= 0.0:
                    lo = mid
                else:
                    hi = mid
            if lo < tc_best:
                tc_best, idx_best = lo, idx
        if idx_best < 0:
            q = qn
            t += h
            continue
        q = q + tc_best * v
        t += tc_best
        if idx_best < 4:
            cx, cy = _ARC_CENTERS[idx_best]
            w = np.array((q[0] - cx, q[1] - cy))
            n = w / np.hypot(*w)
            d = v[0] * n[0] + v[1] * n[1]
            v = np.array((v[0] - 2.0 * d * n[0], v[1] - 2.0 * d * n[1], v[2]))
        elif idx_best == 4:
            v = np.array((v[2], v[1], v[0]))
        else:
            v = np.array((v[0], v[1], -v[2]))
        q = q + 1e-12 * v  # step off the surface, beyond bisection residue
    return FlowState(q, v)
