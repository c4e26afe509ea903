"""Event-loop cores compiled with numba.

Single source of truth for event-driven stepping; the wrappers in
dynamics.py add validation, logging and the error taxonomy.  Nothing in
this module raises - failures surface as status codes.

State is shuttled through two small arrays so long runs can resume
across buffer refills:

    fstate: q1 q2 q3 v1 v2 v3 t_now win_time energy_drift
    istate: events_done bp_events_done win_events
"""

import numba as nb
import numpy as np

# stop/fail codes
STOP_CAP = 0        # output buffer full; caller may grow and resume
STOP_EVENTS = 1
STOP_BP = 2
STOP_TIME = 3
FAIL_NO_EVENT = -1
FAIL_CORNER = -2
FAIL_RATE_CAP = -3

# event kinds
BP = 0
BW0 = 1             # arcs: kind = 1 + arc index, centers (+,+), (+,-), (-,+), (-,-)
PW_LO = 5
PW_HI = 6

T_TOL = 1e-12       # two candidates closer than T_TOL*scale -> corner report
NUDGE = 1e-14       # post-event advance along the outgoing velocity
CAP_WINDOW = 1e-6   # chattering guard: window length ...
CAP_EVENTS = 1_000_000  # ... and the maximum events tolerated inside one


@nb.njit(cache=True, nogil=True)
def next_event_core(rho2, smin, smax, eta_half, q1, q2, q3, v1, v2, v3):
    """Minimal positive hit time.  Returns (dt, kind, separation).

    kind is -1 when no candidate exists; separation is the gap to the
    second-best candidate (inf when unique) for the corner-ambiguity test.
    """
    best = np.inf
    second = np.inf
    kind = -1

    # corner-disc arcs, approached from outside (w.u < 0)
    u2 = v1 * v1 + v2 * v2
    if u2 > 0.0:
        for idx in range(4):
            cx = 0.5 if idx < 2 else -0.5
            cy = 0.5 if idx % 2 == 0 else -0.5
            wx = q1 - cx
            wy = q2 - cy
            b = wx * v1 + wy * v2
            if b < 0.0:
                c = wx * wx + wy * wy - rho2
                disc = b * b - u2 * c
                if disc > 0.0:
                    # citardauq form of the smaller root, stable at grazing
                    t = c / (np.sqrt(disc) - b)
                    if t > 0.0:
                        if t < best:
                            second = best
                            best = t
                            kind = 1 + idx
                        elif t < second:
                            second = t

    # piston face: relative normal motion required (grazing is no collision)
    dv = v1 - v3
    if dv > 0.0:
        t = (q3 - q1) / dv
        if t > 0.0 and abs(q2 + t * v2) <= eta_half:
            if t < best:
                second = best
                best = t
                kind = BP
            elif t < second:
                second = t

    # slot ends
    if v3 > 0.0:
        t = (smax - q3) / v3
        if t > 0.0:
            if t < best:
                second = best
                best = t
                kind = PW_HI
            elif t < second:
                second = t
    elif v3 < 0.0:
        t = (smin - q3) / v3
        if t > 0.0:
            if t < best:
                second = best
                best = t
                kind = PW_LO
            elif t < second:
                second = t

    return best, kind, second - best


@nb.njit(cache=True, nogil=True)
def step_core(rho, rho2, smin, smax, eta_half, q1, q2, q3, v1, v2, v3):
    """Advance to the next event and apply it.

    Returns (dt, kind, q1, q2, q3, v1, v2, v3, status).  The contact
    coordinate is snapped onto the exact surface before reflecting, and
    the outgoing state is nudged off it, so roundoff cannot accumulate
    into the containment invariants.
    """
    dt, kind, sep = next_event_core(rho2, smin, smax, eta_half,
                                    q1, q2, q3, v1, v2, v3)
    if kind < 0:
        return 0.0, -1, q1, q2, q3, v1, v2, v3, FAIL_NO_EVENT
    if sep < T_TOL * max(1.0, dt):
        return dt, kind, q1, q2, q3, v1, v2, v3, FAIL_CORNER

    q1 += dt * v1
    q2 += dt * v2
    q3 += dt * v3

    if kind == BP:
        q1 = q3
        tmp = v1
        v1 = v3
        v3 = tmp
    elif kind <= 4:
        cx = 0.5 if kind < 3 else -0.5
        cy = 0.5 if (kind - 1) % 2 == 0 else -0.5
        wx = q1 - cx
        wy = q2 - cy
        r = np.sqrt(wx * wx + wy * wy)
        wx *= rho / r
        wy *= rho / r
        q1 = cx + wx
        q2 = cy + wy
        nx = wx / rho
        ny = wy / rho
        d = v1 * nx + v2 * ny
        v1 -= 2.0 * d * nx
        v2 -= 2.0 * d * ny
        # re-pin the planar speed so |v| = 1 exactly survives long runs
        u2 = v1 * v1 + v2 * v2
        tgt = 1.0 - v3 * v3
        if u2 > 0.0 and tgt > 0.0:
            f = np.sqrt(tgt / u2)
            v1 *= f
            v2 *= f
    elif kind == PW_LO:
        q3 = smin
        v3 = -v3
    else:
        q3 = smax
        v3 = -v3

    q1 += NUDGE * v1
    q2 += NUDGE * v2
    q3 += NUDGE * v3
    return dt, kind, q1, q2, q3, v1, v2, v3, STOP_CAP


@nb.njit(cache=True, nogil=True)
def run_fill(rho, rho2, smin, smax, eta_half, fstate, istate,
             max_events, max_bp, max_time, times, kinds, posts):
    """Step until a stop/fail condition or the buffers fill.

    times/kinds/posts receive per-event flight time, kind code and the
    post-collision (q, v).  Returns (n_filled, status); fstate/istate are
    updated in place so the caller can grow buffers and resume.
    """
    cap = times.shape[0]
    q1, q2, q3 = fstate[0], fstate[1], fstate[2]
    v1, v2, v3 = fstate[3], fstate[4], fstate[5]
    t_now = fstate[6]
    win_t = fstate[7]
    drift = fstate[8]
    ev = istate[0]
    nbp = istate[1]
    win_n = istate[2]

    n = 0
    status = STOP_CAP
    while n < cap:
        dt, kind, q1, q2, q3, v1, v2, v3, st = step_core(
            rho, rho2, smin, smax, eta_half, q1, q2, q3, v1, v2, v3)
        if st != STOP_CAP:
            status = st
            break

        t_now += dt
        ev += 1
        times[n] = dt
        kinds[n] = kind
        posts[n, 0] = q1
        posts[n, 1] = q2
        posts[n, 2] = q3
        posts[n, 3] = v1
        posts[n, 4] = v2
        posts[n, 5] = v3
        n += 1

        e = v1 * v1 + v2 * v2 + v3 * v3
        dev = abs(e - 1.0)
        if dev > drift:
            drift = dev

        win_t += dt
        win_n += 1
        if win_t >= CAP_WINDOW:
            win_t = 0.0
            win_n = 0
        elif win_n > CAP_EVENTS:
            status = FAIL_RATE_CAP
            break

        if kind == BP:
            nbp += 1
            if nbp >= max_bp:
                status = STOP_BP
                break
        if ev >= max_events:
            status = STOP_EVENTS
            break
        if t_now >= max_time:
            status = STOP_TIME
            break

    fstate[0], fstate[1], fstate[2] = q1, q2, q3
    fstate[3], fstate[4], fstate[5] = v1, v2, v3
    fstate[6] = t_now
    fstate[7] = win_t
    fstate[8] = drift
    istate[0] = ev
    istate[1] = nbp
    istate[2] = win_n
    return n, status


@nb.njit(cache=True, nogil=True)
def run_bp_incoming(rho, rho2, smin, smax, eta_half, fstate, istate,
                    max_events, out_t, out_v, counts):
    """Long equilibrium run recording incoming velocities at face events.

    out_t[i] is the absolute time of the i-th face event, out_v[i] the
    pre-collision velocity there (reconstructed from the exact exchange).
    counts accumulates events per kind code.  Stops when out_t is full or
    max_events is exceeded.  Returns (n_bp, status).
    """
    cap = out_t.shape[0]
    q1, q2, q3 = fstate[0], fstate[1], fstate[2]
    v1, v2, v3 = fstate[3], fstate[4], fstate[5]
    t_now = fstate[6]
    win_t = fstate[7]
    drift = fstate[8]
    ev = istate[0]
    nbp = istate[1]
    win_n = istate[2]

    status = STOP_BP
    while True:
        dt, kind, q1, q2, q3, v1, v2, v3, st = step_core(
            rho, rho2, smin, smax, eta_half, q1, q2, q3, v1, v2, v3)
        if st != STOP_CAP:
            status = st
            break

        t_now += dt
        ev += 1
        counts[kind] += 1

        e = v1 * v1 + v2 * v2 + v3 * v3
        dev = abs(e - 1.0)
        if dev > drift:
            drift = dev

        win_t += dt
        win_n += 1
        if win_t >= CAP_WINDOW:
            win_t = 0.0
            win_n = 0
        elif win_n > CAP_EVENTS:
            status = FAIL_RATE_CAP
            break

        if kind == BP:
            out_t[nbp] = t_now
            out_v[nbp, 0] = v3  # exchange is exact: incoming = swapped outgoing
            out_v[nbp, 1] = v2
            out_v[nbp, 2] = v1
            nbp += 1
            if nbp >= cap:
                status = STOP_BP
                break
        if ev >= max_events:
            status = STOP_EVENTS
            break

    fstate[0], fstate[1], fstate[2] = q1, q2, q3
    fstate[3], fstate[4], fstate[5] = v1, v2, v3
    fstate[6] = t_now
    fstate[7] = win_t
    fstate[8] = drift
    istate[0] = ev
    istate[1] = nbp
    istate[2] = win_n
    return nbp, status


@nb.njit(cache=True, nogil=True)
def batch_first_bp(rho, rho2, smin, smax, eta_half, starts,
                   max_events_per, out_t, out_v, out_status):
    """Time and incoming velocity of the first face event per start state."""
    n = starts.shape[0]
    for i in range(n):
        q1, q2, q3 = starts[i, 0], starts[i, 1], starts[i, 2]
        v1, v2, v3 = starts[i, 3], starts[i, 4], starts[i, 5]
        t_now = 0.0
        win_t = 0.0
        win_n = 0
        out_status[i] = STOP_EVENTS
        for _ in range(max_events_per):
            dt, kind, q1, q2, q3, v1, v2, v3, st = step_core(
                rho, rho2, smin, smax, eta_half, q1, q2, q3, v1, v2, v3)
            if st != STOP_CAP:
                out_status[i] = st
                break
            t_now += dt
            win_t += dt
            win_n += 1
            if win_t >= CAP_WINDOW:
                win_t = 0.0
                win_n = 0
            elif win_n > CAP_EVENTS:
                out_status[i] = FAIL_RATE_CAP
                break
            if kind == BP:
                out_t[i] = t_now
                out_v[i, 0] = v3
                out_v[i, 1] = v2
                out_v[i, 2] = v1
                out_status[i] = STOP_BP
                break
