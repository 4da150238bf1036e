"""Estimator tests: detailed balance, Bennett solve, convergence diagnostics."""

import math

import numpy as np
import pytest

from qecsplit import estimator
from qecsplit.circuit import (
    Event,
    InvalidParameterError,
    NoiseModel,
    build_rotated_surface_code,
    event_log_probability,
    fault_labels,
)
from qecsplit.estimator import (
    BennettBracketError,
    BudgetExceededError,
    ChainState,
    FailureCache,
    GelmanRubinUndefinedError,
    MalignancyOracle,
    PartialResultError,
    Schedule,
    acceptance_probability,
    bennett_solve,
    cached_is_malignant,
    gelman_rubin,
    generate_schedule,
    malignant_fraction,
    mc_estimate,
    metropolis_step,
    run_splitting,
    subset_sampling_estimate,
)


@pytest.fixture(scope="module")
def d3():
    c = build_rotated_surface_code(3)
    noise = NoiseModel.uniform(c, 1e-3)
    return c, noise


def random_event(circuit, rng, max_weight=3):
    k = int(rng.integers(0, max_weight + 1))
    gids = rng.choice(circuit.num_gates, size=k, replace=False)
    pairs = []
    for g in gids:
        labs = fault_labels(circuit.gate(int(g)).kind)
        pairs.append((int(g), labs[int(rng.integers(len(labs)))]))
    return tuple(sorted(pairs))


def test_detailed_balance(d3):
    # pi(E) P(E -> E') == pi(E') P(E' -> E) for every move type, where the
    # transition includes the uniform proposal probability and the
    # Metropolis acceptance.  The malignancy veto is symmetric so it drops
    # out of the balance condition.
    c, noise = d3
    rng = np.random.default_rng(17)
    G = c.num_gates
    checked = 0
    while checked < 10_000:
        e = random_event(c, rng)
        g = int(rng.integers(G))
        labs = fault_labels(c.gate(g).kind)
        f = labs[int(rng.integers(len(labs)))]
        current = dict(e).get(g)
        if current is None:
            e2 = tuple(sorted(e + ((g, f),)))
            back = f
        elif f == current:
            e2 = tuple(p for p in e if p[0] != g)
            back = f
        else:
            e2 = tuple(sorted(tuple(p for p in e if p[0] != g) + ((g, f),)))
            back = current
        prop = 1.0 / (G * len(labs))
        flow = math.exp(event_log_probability(Event.from_pairs(e), noise)) \
            * prop * acceptance_probability(noise, e, g, f)
        rflow = math.exp(event_log_probability(Event.from_pairs(e2), noise)) \
            * prop * acceptance_probability(noise, e2, g, back)
        assert flow == pytest.approx(rflow, rel=1e-10)
        checked += 1


def test_acceptance_probability_values(d3):
    c, noise = d3
    gid = next(g.id for g in c.gates if len(fault_labels(g.kind)) == 15)
    # insertion into the empty event at a uniform CNOT
    a = acceptance_probability(noise, (), gid, "XX")
    assert a == pytest.approx((1e-3 / 15) / (1 - 1e-3), rel=1e-12)
    assert a == pytest.approx(6.673e-5, rel=1e-3)
    # deletion is the reciprocal move, clipped at one
    assert acceptance_probability(noise, ((gid, "XX"),), gid, "XX") == 1.0
    # replacement is always accepted
    assert acceptance_probability(noise, ((gid, "XX"),), gid, "ZZ") == 1.0


def test_metropolis_chain_stays_malignant(d3):
    c, noise = d3
    oracle = MalignancyOracle(c, noise, "Z")
    # find a malignant starting event by rejection
    rng = np.random.default_rng(23)
    start = None
    while start is None:
        e = random_event(c, rng, max_weight=2)
        if len(e) == 2 and oracle(e):
            start = e
    chain = ChainState(event=start, rng=np.random.default_rng(29))
    for _ in range(300):
        metropolis_step(chain, c, noise, oracle)
        assert chain.event, "chain left the malignant set (empty event)"
        assert oracle(chain.event)
    assert chain.steps == 300
    assert 0 < chain.jumps <= 300


def test_bennett_constant_ratio():
    for r in (0.3, 0.05, 0.9):
        lo = [math.log(r)] * 50
        hi = [math.log(r)] * 50
        assert bennett_solve(lo, hi) == pytest.approx(r, rel=1e-10)


def test_bennett_root_property():
    # independently coded balance residual vanishes at the returned root
    rng = np.random.default_rng(41)
    lo = list(rng.normal(-1.2, 0.7, size=200))
    hi = list(rng.normal(-0.8, 0.5, size=200))
    C = bennett_solve(lo, hi)
    t = math.log(C)

    def g(x):
        return 1.0 / (1.0 + x)

    left = sum(g(math.exp(t - l)) for l in lo) / len(lo)
    right = sum(g(math.exp(h - t)) for h in hi) / len(hi)
    assert left == pytest.approx(right, abs=1e-9)


def test_bennett_two_point_symbolic():
    # two samples a side: the residual is a rational function of C whose
    # root can be pinned by high-precision bisection on exact arithmetic
    mpmath = pytest.importorskip("mpmath")
    lo = [-2.0, -1.0]
    hi = [-1.5, -0.5]

    def h(t):
        t = mpmath.mpf(t)
        s = lambda x: 1 / (1 + mpmath.exp(-x))
        return (s(lo[0] - t) + s(lo[1] - t)) / 2 \
            - (s(t - hi[0]) + s(t - hi[1])) / 2

    a, b = mpmath.mpf(-20), mpmath.mpf(20)
    for _ in range(200):
        m = (a + b) / 2
        if h(m) > 0:
            a = m
        else:
            b = m
    expect = mpmath.exp((a + b) / 2)
    assert bennett_solve(lo, hi) == pytest.approx(float(expect), rel=1e-9)


def test_bennett_errors():
    with pytest.raises(InvalidParameterError):
        bennett_solve([], [0.0])
    with pytest.raises(BennettBracketError):
        bennett_solve([1e6], [-1e6])


def test_gelman_rubin_reference():
    rng = np.random.default_rng(13)
    chains = [list(rng.normal(mu, 1.0, size=40)) for mu in (0.0, 0.2, -0.1)]
    got = gelman_rubin(chains)
    # independent evaluation of the split-free PSRF formula
    arr = np.array(chains)
    m, n = arr.shape
    w = np.mean([np.var(cc, ddof=1) for cc in arr])
    b_over_n = np.var(arr.mean(axis=1), ddof=1)
    expect = math.sqrt(((n - 1) / n * w + b_over_n) / w)
    assert got == pytest.approx(expect, rel=1e-10)


def test_gelman_rubin_identical_chains():
    chain = list(np.random.default_rng(2).normal(size=30))
    n = len(chain)
    assert gelman_rubin([chain, chain]) == pytest.approx(
        math.sqrt((n - 1) / n), rel=1e-12)


def test_gelman_rubin_errors():
    with pytest.raises(InvalidParameterError):
        gelman_rubin([[1.0, 2.0]])
    with pytest.raises(GelmanRubinUndefinedError):
        gelman_rubin([[1.0] * 10, [1.0] * 10])


def test_generate_schedule_first_step():
    # with p * weight_count = 4 the first factor is 2^(-1/2)
    s = generate_schedule(1e-3, 1e-4, d=3, G=240, weight_count=4000)
    assert s.points[0] == 1e-3
    assert s.points[1] == pytest.approx(1e-3 * 2 ** -0.5, rel=1e-12)
    assert s.points[1] == pytest.approx(7.071e-4, rel=1e-3)
    assert s.points[-1] == 1e-4
    assert all(b < a for a, b in zip(s.points, s.points[1:]))


def test_generate_schedule_floor_regime():
    # once p * weight_count < d/2 the ratio is the constant 2^(-1/sqrt(d/2))
    s = generate_schedule(1e-6, 1e-7, d=8, G=240, weight_count=100)
    factor = 2.0 ** (-1.0 / math.sqrt(4.0))
    for a, b in zip(s.points[:-2], s.points[1:-1]):
        assert b / a == pytest.approx(factor, rel=1e-12)


def test_schedule_validation():
    with pytest.raises(InvalidParameterError):
        Schedule([1e-3, 1e-3], [1.0])
    with pytest.raises(InvalidParameterError):
        generate_schedule(1e-4, 1e-3, d=3, G=240)


def test_subset_prefactor_against_bigfloat(d3):
    mpmath = pytest.importorskip("mpmath")
    c, noise = d3
    est = subset_sampling_estimate(c, noise, 1e-3, m=2, shots_per_k=10,
                                   seed=1)
    p = mpmath.mpf("1e-3")
    expect = mpmath.binomial(240, 2) * p ** 2 * (1 - p) ** 238
    assert est.strata[2].prefactor == pytest.approx(float(expect), rel=1e-12)
    assert float(expect) == pytest.approx(2.26e-2, rel=2e-2)


def test_subset_zero_stratum_flag(d3):
    c, noise = d3
    # weight-1 events are never malignant, so stratum 1 must flag zero
    est = subset_sampling_estimate(c, noise, 1e-3, m=1, shots_per_k=50,
                                   seed=3)
    assert est.zero_strata == [1]
    assert float(est) == 0.0


def test_subset_rejects_nonuniform_noise(d3):
    c, _ = d3
    skew = NoiseModel(c, 1e-3, region=[0], multiplier=5.0)
    with pytest.raises(InvalidParameterError):
        subset_sampling_estimate(c, skew, 1e-3, m=2, shots_per_k=5)


def test_mc_estimate_formula(monkeypatch, d3):
    c, noise = d3
    fake = [(), (), ((0, "Z"),), (), (), (), ((1, "Z"),), ()]

    def fake_sample(circuit, noise_p, rng, shots):
        out = []
        while len(out) < shots:
            out.append(fake[len(out) % len(fake)] if fake else ())
        del fake[:shots]
        return out[:shots]

    calls = []
    monkeypatch.setattr(estimator, "_sample_events", fake_sample)
    rate, shots, fails = mc_estimate(c, noise, 1e-3, stop_failures=2,
                                     oracle=lambda pairs: True)
    # failures on shots 3 and 7: rate = (k - 1) / (n - 1) = 1 / 6
    assert (rate, shots, fails) == (pytest.approx(1 / 6), 7, 2)


def test_mc_estimate_errors(d3):
    c, noise = d3
    with pytest.raises(InvalidParameterError):
        mc_estimate(c, noise, 0.0, stop_failures=10)
    with pytest.raises(InvalidParameterError):
        mc_estimate(c, noise, 1e-3, stop_failures=1)
    with pytest.raises(PartialResultError) as exc:
        mc_estimate(c, noise, 1e-3, stop_failures=2, max_shots=50,
                    oracle=lambda pairs: False)
    assert exc.value.shots == 50
    assert exc.value.failures == 0


def test_failure_cache_canonicalization(d3):
    c, noise = d3
    cache = FailureCache()
    oracle = MalignancyOracle(c, noise, "Z", cache=cache)
    gid = next(g.id for g in c.gates if len(fault_labels(g.kind)) == 15)
    e1 = ((gid, "XX"), (gid + 1, "XX"))
    a = cached_is_malignant(cache, e1, "Z", c, noise, oracle.decoder)
    b = cached_is_malignant(cache, tuple(reversed(e1)), "Z", c, noise,
                            oracle.decoder)
    assert a == b
    assert cache.hits == 1
    assert cache.misses == 1
    assert len(cache) == 1


def test_malignant_fraction_weight_one_zero(d3):
    c, noise = d3
    for obs in ("Z", "X"):
        est = malignant_fraction(c, noise, k=1, observable=obs)
        assert est.malignant == 0
        assert est.fraction == 0.0
        # product space: 144 CNOTs x 15 labels + 96 prep/meas x 1 label
        assert est.total == 144 * 15 + 96


def test_malignant_fraction_sampled(d3):
    c, noise = d3
    est = malignant_fraction(c, noise, k=2, mode="sampled", budget=2000,
                             seed=5)
    assert est.total == 2000
    assert est.ci_low <= est.fraction <= est.ci_high
    assert 0.0 < est.fraction < 0.2


def test_malignant_fraction_budget_guard(d3):
    c, noise = d3
    with pytest.raises(BudgetExceededError):
        malignant_fraction(c, noise, k=4, budget=1000)
    with pytest.raises(InvalidParameterError):
        malignant_fraction(c, noise, k=0)
    with pytest.raises(InvalidParameterError):
        malignant_fraction(c, noise, k=1, mode="bogus")


def test_run_splitting_single_point_reduces_to_mc(d3):
    c, noise = d3
    report = run_splitting(c, noise, Schedule([2e-2], []), chains=4,
                           min_jumps=2, min_chains_ok=3, seed=7,
                           stop_failures=20)
    assert report.steps == []
    assert report.final_rate == report.mc_rate
    assert report.converged
