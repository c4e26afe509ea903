"""Kernel-layer checks: transfer rate density, closed-form moments against
angle-substitution quadrature, canonical-average identities, jump sampling,
pathwise simulation, and the grid master equation."""

import io
import math

import numpy as np
import pytest
from scipy import integrate, stats

import ballpiston as bp
from ballpiston import kernel as kn

RHO_REF = (math.sqrt(33.0) - 2.0) / (5.0 * math.sqrt(2.0))
PARAMS = bp.GeometryParams(rho=RHO_REF, delta=0.1)
GEOM = bp.derive_geometry(PARAMS)
PREF = GEOM.area_bp / GEOM.gamma_volume


# ------------------------------------------------------------ oracles

def _quad_moment(eb, ep, k):
    """k-th transfer moment by quadrature in alpha, where the integrand
    2*max(sqrt(eb) cos a, sqrt(ep)) * zeta(a)^k is bounded."""
    if eb == 0.0:
        return PREF * (0.5 * math.sqrt(ep) * (-ep) ** k)

    def g(alpha):
        zeta = eb * math.cos(alpha) ** 2 - ep
        return (2.0 * max(math.sqrt(eb) * math.cos(alpha), math.sqrt(ep))
                * zeta ** k)

    pts = [math.acos(math.sqrt(ep / eb))] if ep < eb else []
    val, _ = integrate.quad(g, 0.0, math.pi / 2.0, points=pts, limit=200,
                            epsabs=1e-13, epsrel=1e-12)
    return PREF * val / (2.0 * math.pi)


def _zero_ep_jump_cdf(eb):
    """First-transfer CDF from a resting piston: P(zeta <= y) with the
    angle density proportional to cos(alpha)."""
    def cdf(y):
        r = np.clip(np.asarray(y, dtype=float) / eb, 0.0, 1.0)
        return 1.0 - np.sqrt(1.0 - r)
    return cdf


# ------------------------------------------------------------ kernel density


def test_kernel_density_heaviside():
    pair = bp.EnergyPair(0.3, 0.1)
    assert bp.kernel_density(pair, 0.31, GEOM) == 0.0
    out = bp.kernel_density(pair, np.array([0.05, 0.3, 0.4, 5.0]), GEOM)
    assert out[0] > 0.0 and np.isinf(out[1])
    assert out[2] == 0.0 and out[3] == 0.0


def test_kernel_density_zero_piston_energy():
    # with ep = 0 the max picks sqrt(ep_out), leaving a pure edge singularity
    pair = bp.EnergyPair(0.4, 0.0)
    x = np.array([0.1, 0.25])
    w = bp.kernel_density(pair, x, GEOM)
    ratio = w[0] / w[1]
    assert ratio == pytest.approx(math.sqrt((0.4 - 0.25) / (0.4 - 0.1)),
                                  rel=1e-14)
    assert bp.kernel_density(pair, 0.0, GEOM) == pytest.approx(
        PREF / (2.0 * math.pi * math.sqrt(0.4)), rel=1e-14)


def test_kernel_density_singular_endpoints_flagged():
    pair = bp.EnergyPair(0.3, 0.1)
    assert np.isinf(bp.kernel_density(pair, 0.0, GEOM))
    assert np.isinf(bp.kernel_density(pair, 0.3, GEOM))
    with pytest.raises(bp.ParameterError):
        bp.kernel_density(pair, -0.1, GEOM)


def test_kernel_detailed_balance():
    # (2 ep)^{-1/2} W(eb, ep -> ep_out) is symmetric under swapping the
    # piston energies along a fixed-total line
    rng = bp.seeded_rng(3)
    worst = 0.0
    for _ in range(1000):
        eb = float(rng.uniform(0.01, 2.0))
        ep = float(rng.uniform(0.01, 2.0))
        ep_out = float(rng.uniform(1e-6, eb))
        lhs = bp.kernel_density(bp.EnergyPair(eb, ep), ep_out, GEOM) \
            / math.sqrt(2.0 * ep)
        rhs = bp.kernel_density(bp.EnergyPair(eb + ep - ep_out, ep_out),
                                ep, GEOM) / math.sqrt(2.0 * ep_out)
        worst = max(worst, abs(lhs - rhs) / rhs)
    assert worst < 1e-12


# ------------------------------------------------------------ moments


def test_moments_match_quadrature():
    rng = bp.seeded_rng(4)
    pairs = [(float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.0, 2.0)))
             for _ in range(100)]
    pairs += [(0.7, 0.0), (0.0, 0.4), (0.5, 0.5)]
    for eb, ep in pairs:
        got = bp.moments(bp.EnergyPair(eb, ep), GEOM)
        for k, v in enumerate(got):
            want = _quad_moment(eb, ep, k)
            assert v == pytest.approx(want, rel=1e-8, abs=1e-13), (eb, ep, k)


def test_moment_branch_continuity():
    for ep in (0.1, 0.25, 1.0, 3.7):
        e = np.array(ep)
        for above, below in ((kn._f_above, kn._f_below),
                             (kn._j_above, kn._j_below),
                             (kn._h_above, kn._h_below)):
            a, b = float(above(e, e)), float(below(e, e))
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b)), (ep, above)


def test_moment_values_at_equal_split():
    # f -> sqrt(ep)/2 and j -> -ep^{3/2}/4 times the prefactor
    f, j, _ = bp.moments(bp.EnergyPair(0.3, 0.3), GEOM)
    assert f == pytest.approx(PREF * 0.5 * math.sqrt(0.3), rel=1e-14)
    assert j == pytest.approx(-PREF * 0.3 ** 1.5 / 4.0, rel=1e-14)


def test_moments_fixed_total_match_conditional_rate():
    for ep in np.linspace(0.01, 0.49, 25):
        f, _, _ = bp.moments(bp.EnergyPair(0.5 - ep, ep), GEOM)
        nu, _ = bp.conditional_rate(GEOM, float(ep))
        assert f == pytest.approx(nu, rel=1e-12)


# ------------------------------------------------------------ canonical check


def test_canonical_averages_agree():
    vals = bp.canonical_check(1.0, GEOM)
    target = vals[3]
    assert target == pytest.approx(PREF / math.sqrt(2.0 * math.pi), rel=1e-15)
    for v in vals[:3]:
        assert v == pytest.approx(target, rel=1e-6)


def test_canonical_average_monte_carlo():
    # independent route: sample the product of Gamma laws directly
    beta = 1.0
    rng = bp.seeded_rng(8)
    n = 2_000_000
    ep = rng.gamma(0.5, 1.0 / beta, size=n)
    eb = rng.exponential(1.0 / beta, size=n)
    f, _, _ = kn._raw_moments(eb, ep)
    f = PREF * f
    se = f.std(ddof=1) / math.sqrt(n)
    vals = bp.canonical_check(beta, GEOM)
    assert abs(f.mean() - vals[0]) < 3.0 * se


def test_canonical_beta_scaling():
    lo = bp.canonical_check(1.0, GEOM)
    hi = bp.canonical_check(4.0, GEOM)
    for a, b in zip(lo, hi):
        assert a / b == pytest.approx(2.0, rel=1e-6)


def test_canonical_small_delta_limit():
    thin = bp.derive_geometry(bp.GeometryParams(rho=RHO_REF, delta=1e-3))
    vals = bp.canonical_check(1.0, thin)
    # delta^-2 <f> approaches 2 sqrt(2)/sqrt(pi) times the thin-slot rate
    limit = bp.small_delta_rate(RHO_REF) * 2.0 * math.sqrt(2.0 / math.pi)
    assert vals[0] / 1e-6 == pytest.approx(limit, rel=0.01)


def test_canonical_check_validation():
    with pytest.raises(bp.ParameterError):
        bp.canonical_check(0.0, GEOM)


# ------------------------------------------------------------ jump sampling


def test_sample_jump_support_and_moments():
    pair = bp.EnergyPair(0.7, 0.3)
    rng = bp.seeded_rng(12)
    z = np.array([bp.sample_jump(pair, rng) for _ in range(1_000_000)])
    assert z.min() >= -pair.ep and z.max() <= pair.eb  # stated invariant
    assert z.max() <= pair.eb - pair.ep  # actual support is tighter
    f, j, h = bp.moments(pair, GEOM)
    se1 = z.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.mean() - j / f) < 3.0 * se1
    z2 = z * z
    se2 = z2.std(ddof=1) / math.sqrt(z.size)
    assert abs(z2.mean() - h / f) < 3.0 * se2


def test_sample_jump_degenerate_ball():
    rng = bp.seeded_rng(13)
    assert bp.sample_jump(bp.EnergyPair(0.0, 0.4), rng) == -0.4


def test_sample_jump_resting_piston_law():
    eb = 0.5
    rng = bp.seeded_rng(14)
    z = np.array([bp.sample_jump(bp.EnergyPair(eb, 0.0), rng)
                  for _ in range(100_000)])
    assert (z >= 0.0).all()
    p = stats.kstest(z, _zero_ep_jump_cdf(eb)).pvalue
    assert p > 0.01


# ------------------------------------------------------------ gillespie


@pytest.fixture(scope="module")
def long_path():
    return bp.gillespie(bp.EnergyPair(0.5, 0.0), 1.2e7, GEOM, bp.seeded_rng(29))


def test_gillespie_stationary_occupation(long_path):
    # iid time points turn the time-weighted occupation into iid draws from
    # the stationary law, whose CDF is sqrt(2 ep) at total energy 1/2
    pts = np.sort(bp.seeded_rng(30).uniform(0.0, long_path.total_time, 2000))
    eps = np.array([long_path.state_at_time(t).ep for t in pts])
    p = stats.kstest(eps, lambda x: np.sqrt(2.0 * np.clip(x, 0.0, 0.5))).pvalue
    assert p > 0.05


def test_gillespie_resting_piston_start_stays_valid(long_path):
    assert len(long_path) > 100_000
    eps = long_path.ep_series()
    assert eps.min() >= 0.0 and eps.max() <= 0.5
    first_time, first_zeta, first_post = long_path[0]
    assert first_zeta > 0.0 and first_zeta == first_post.ep
    assert first_post.etotal == pytest.approx(0.5, rel=1e-15)


def test_gillespie_jump_bounds(long_path):
    eps = long_path.ep_series()
    pre = np.concatenate([[long_path.start.ep], eps[:-1]])
    eb_pre = long_path.start.etotal - pre
    assert (long_path.zetas >= -pre).all()
    assert (long_path.zetas <= eb_pre).all()


def test_gillespie_conditional_jump_rate(long_path):
    # expected jump counts integrate the state-dependent rate over occupation
    eps = long_path.ep_series()
    pre = np.concatenate([[long_path.start.ep], eps[:-1]])
    durations = np.diff(np.concatenate([[0.0], long_path.times]))
    f, _, _ = kn._raw_moments(0.5 - pre, pre)
    rate = PREF * f
    edges = np.linspace(0.0, 0.5, 6)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (pre >= lo) & (pre < hi)
        observed = int(sel.sum())
        expected = float((durations[sel] * rate[sel]).sum())
        # occupation-weighted expectation; waiting times are exponential
        assert abs(observed - expected) < 3.0 * math.sqrt(expected) + 3.0


def test_gillespie_deterministic():
    a = bp.gillespie(bp.EnergyPair(0.2, 0.3), 5e4, GEOM, bp.seeded_rng(31))
    b = bp.gillespie(bp.EnergyPair(0.2, 0.3), 5e4, GEOM, bp.seeded_rng(31))
    assert (a.times == b.times).all() and (a.zetas == b.zetas).all()
    with pytest.raises(bp.ParameterError):
        bp.gillespie(bp.EnergyPair(0.2, 0.3), 0.0, GEOM, bp.seeded_rng(1))


def test_jumplog_indexing_and_csv(long_path):
    t, z, post = long_path[10]
    assert t == long_path.times[10] and z == long_path.zetas[10]
    with pytest.raises(bp.ParameterError):
        long_path.state_at_time(-1.0)
    with pytest.raises(bp.ParameterError):
        long_path.state_at_time(long_path.total_time * 1.5)

    short = bp.gillespie(bp.EnergyPair(0.1, 0.4), 2e3, GEOM, bp.seeded_rng(32))
    buf = io.StringIO()
    short.to_csv(buf)
    rows = buf.getvalue().strip().splitlines()
    assert rows[0] == "t,zeta,eb,ep"
    assert len(rows) == len(short) + 1
    cells = rows[3].split(",")
    assert float(cells[0]) == short.times[2]
    assert float(cells[1]) == short.zetas[2]
    assert float(cells[3]) == short.ep_series()[2]


def test_energy_pair_validation():
    with pytest.raises(bp.ParameterError):
        bp.EnergyPair(-0.1, 0.2)
    with pytest.raises(bp.ParameterError):
        bp.EnergyPair(0.0, 0.0)
    with pytest.raises(bp.ParameterError):
        bp.EnergyPair(math.nan, 0.2)
    assert bp.EnergyPair(0.2, 0.3).etotal == 0.5


# ------------------------------------------------------------ master equation


def test_grid_density_validation():
    with pytest.raises(bp.ParameterError):
        bp.EnergyGridDensity(edges=np.array([0.1, 0.5]), probs=np.array([1.0]))
    with pytest.raises(bp.ParameterError):
        bp.EnergyGridDensity(edges=np.array([0.0, 0.5]), probs=np.array([0.9]))
    with pytest.raises(bp.ParameterError):
        bp.EnergyGridDensity(edges=np.array([0.0, 0.3, 0.2]),
                             probs=np.array([0.5, 0.5]))
    with pytest.raises(bp.ParameterError):
        bp.EnergyGridDensity.point_mass(0.5, 10, 0.6)
    grid = bp.EnergyGridDensity.stationary(0.5, 64)
    assert grid.probs.sum() == pytest.approx(1.0, abs=1e-12)
    # cell masses follow the sqrt increments exactly
    want = np.diff(np.sqrt(grid.edges))
    np.testing.assert_allclose(grid.probs, want / want.sum(), rtol=1e-14)


def test_master_preserves_stationary_density():
    p0 = bp.EnergyGridDensity.stationary(0.5, 128)
    out = bp.master_evolve(p0, 5.0, 1000, GEOM)
    assert np.abs(out.probs - p0.probs).max() < 1e-8
    assert out.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_master_conserves_probability_each_step():
    p = bp.EnergyGridDensity.point_mass(0.5, 64, 0.4)
    for _ in range(25):
        p = bp.master_evolve(p, 5.0, 1, GEOM)
        assert abs(p.probs.sum() - 1.0) < 1e-12
        assert p.probs.min() >= 0.0


def test_master_point_mass_relaxes_monotonically():
    cells = 64
    target = bp.EnergyGridDensity.stationary(0.5, cells).probs
    p = bp.EnergyGridDensity.point_mass(0.5, cells, 0.45)
    tv = [0.5 * np.abs(p.probs - target).sum()]
    for _ in range(40):
        p = bp.master_evolve(p, 10.0, 25, GEOM)
        tv.append(0.5 * np.abs(p.probs - target).sum())
    assert all(b <= a + 1e-12 for a, b in zip(tv, tv[1:]))
    assert tv[-1] < 0.01 < tv[0]


def test_master_matches_gillespie_ensemble():
    tfin = 5.0 * GEOM.tau_bp
    final = bp.gillespie_ensemble(bp.EnergyPair(0.15, 0.35), tfin, GEOM,
                                  bp.seeded_rng(33), 1_000_000)
    cells = 200
    p0 = bp.EnergyGridDensity.point_mass(0.5, cells, 0.35)
    rates = kn._rate_matrix(p0.edges, PREF)
    dt_max = kn.STABILITY_FACTOR / rates.sum(axis=1).max()
    steps = int(math.ceil(tfin / (0.2 * dt_max)))
    out = bp.master_evolve(p0, tfin / steps, steps, GEOM)
    hist, _ = np.histogram(final, bins=p0.edges)
    tv = 0.5 * np.abs(hist / final.size - out.probs).sum()
    assert tv < 0.02


def test_master_stability_bound():
    p0 = bp.EnergyGridDensity.stationary(0.5, 128)
    rates = kn._rate_matrix(p0.edges, PREF)
    dt_bad = 1.01 * kn.STABILITY_FACTOR / rates.sum(axis=1).max()
    with pytest.raises(bp.ParameterError):
        bp.master_evolve(p0, dt_bad, 1, GEOM)
    with pytest.raises(bp.ParameterError):
        bp.master_evolve(p0, -1.0, 1, GEOM)


def test_gillespie_ensemble_validation_and_determinism():
    a = bp.gillespie_ensemble(bp.EnergyPair(0.3, 0.2), 100.0, GEOM,
                              bp.seeded_rng(34), 500)
    b = bp.gillespie_ensemble(bp.EnergyPair(0.3, 0.2), 100.0, GEOM,
                              bp.seeded_rng(34), 500)
    assert (a == b).all()
    assert a.min() >= 0.0 and a.max() <= 0.5
    with pytest.raises(bp.ParameterError):
        bp.gillespie_ensemble(bp.EnergyPair(0.3, 0.2), 100.0, GEOM,
                              bp.seeded_rng(35), 0)
