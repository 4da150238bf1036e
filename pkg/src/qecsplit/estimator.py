"""Failure-rate estimators: direct Monte Carlo and multilevel splitting.

Direct estimation samples i.i.d. fault configurations and decodes them, with
a negative-binomial stopping rule or a weight-stratified (subset) sum.  The
splitting path runs Metropolis chains restricted to the malignant set at a
decreasing sequence of physical rates, estimates consecutive failure-rate
ratios with the Bennett acceptance-ratio equation, and telescopes them into
an estimate far below direct Monte Carlo reach.  All probability arithmetic
stays in log space.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .circuit import (
    Circuit,
    Event,
    InvalidParameterError,
    NoiseModel,
    fault_labels,
)
from .decoder import CircuitDecoder, decode_count
from .pauli import SyndromeTable, is_malignant

PairTuple = Tuple[Tuple[int, str], ...]


class EstimationError(RuntimeError):
    pass


class PartialResultError(EstimationError):
    """Shot budget exhausted before the stopping rule was met."""

    def __init__(self, message: str, shots: int, failures: int):
        super().__init__(message)
        self.shots = shots
        self.failures = failures


class SetupError(EstimationError):
    pass


class BennettBracketError(EstimationError):
    pass


class GelmanRubinUndefinedError(EstimationError):
    pass


class BudgetExceededError(EstimationError):
    pass


def _canonical(pairs: Iterable[Tuple[int, str]]) -> PairTuple:
    return tuple(sorted(pairs))


def _circuit_labels(circuit: Circuit) -> List[Tuple[str, ...]]:
    cached = getattr(circuit, "_label_cache", None)
    if cached is None:
        cached = [fault_labels(g.kind) for g in circuit.gates]
        try:
            circuit._label_cache = cached
        except AttributeError:
            object.__setattr__(circuit, "_label_cache", cached)
    return cached


class FailureCache:
    """Shared map from (canonical event, observable, decoder key) to malignancy.

    Values are deterministic, so concurrent last-write-wins updates are safe;
    the cache affects speed only, never outcomes.
    """

    def __init__(self):
        self.data: Dict[Tuple, bool] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self.data)


def _decoder_key(decoder: CircuitDecoder) -> Tuple:
    key = getattr(decoder, "_cache_key", None)
    if key is None:
        key = (decoder.observable, decoder.graph.window,
               hash(decoder.noise.pr.tobytes()))
        decoder._cache_key = key
    return key


def cached_is_malignant(cache: FailureCache, event, observable: str,
                        circuit: Circuit, noise: NoiseModel,
                        decoder: CircuitDecoder) -> bool:
    """Memoized malignancy: canonical events share one decoder call."""
    pairs = _canonical(event)
    key = (pairs, observable, _decoder_key(decoder))
    hit = cache.data.get(key)
    if hit is not None:
        cache.hits += 1
        return hit
    cache.misses += 1
    table = getattr(decoder, "table", None)
    if table is not None:
        bits, flips = table.syndrome_bits(pairs)
        result = decoder.is_malignant_bits(bits, flips)
    else:
        result = is_malignant(circuit, noise, Event.from_pairs(pairs),
                              decoder, observable)
    cache.data[key] = result
    return result


class MalignancyOracle:
    """Callable malignancy test over canonical pair tuples, cache-backed."""

    def __init__(self, circuit: Circuit, noise: NoiseModel, observable: str,
                 decoder: Optional[CircuitDecoder] = None,
                 table: Optional[SyndromeTable] = None,
                 cache: Optional[FailureCache] = None):
        self.circuit = circuit
        self.noise = noise
        self.observable = observable
        self.table = table if table is not None else SyndromeTable(circuit)
        self.decoder = decoder if decoder is not None else CircuitDecoder(
            circuit, noise, observable, self.table)
        self.cache = cache if cache is not None else FailureCache()

    def __call__(self, pairs: Iterable[Tuple[int, str]]) -> bool:
        return cached_is_malignant(self.cache, pairs, self.observable,
                                   self.circuit, self.noise, self.decoder)

    @property
    def decode_calls(self) -> int:
        return decode_count(self.decoder)


def _pr_groups(noise: NoiseModel) -> List[Tuple[float, np.ndarray]]:
    groups = []
    for pr in np.unique(noise.pr):
        if pr > 0.0:
            groups.append((float(pr), np.nonzero(noise.pr == pr)[0]))
    return groups


def _sample_events(circuit: Circuit, noise: NoiseModel,
                   rng: np.random.Generator, shots: int) -> List[PairTuple]:
    """One i.i.d. fault configuration per shot (possibly empty)."""
    labels = _circuit_labels(circuit)
    groups = _pr_groups(noise)
    counts = [rng.binomial(len(gids), pr, size=shots) for pr, gids in groups]
    out: List[PairTuple] = []
    for s in range(shots):
        pairs: List[Tuple[int, str]] = []
        for gi, (pr, gids) in enumerate(groups):
            k = int(counts[gi][s])
            if k == 0:
                continue
            chosen = gids if k == len(gids) else rng.choice(
                gids, size=k, replace=False)
            for g in chosen:
                labs = labels[g]
                lab = labs[0] if len(labs) == 1 else labs[
                    int(rng.integers(len(labs)))]
                pairs.append((int(g), lab))
        out.append(_canonical(pairs))
    return out


def mc_estimate(circuit: Circuit, noise: NoiseModel, p: float,
                stop_failures: int, max_shots: int = 100_000_000,
                observable: str = "Z", seed: int = 0,
                oracle: Optional[MalignancyOracle] = None,
                collect_events: int = 0,
                collected: Optional[List[PairTuple]] = None
                ) -> Tuple[float, int, int]:
    """Direct MC with unbiased negative-binomial stopping.

    Samples shots until the stop_failures-th failure lands on shot n and
    returns ((k - 1) / (n - 1), n, k).  Harvested failing events (up to
    collect_events distinct ones) are appended to `collected`.
    """
    if p <= 0.0:
        raise InvalidParameterError("p must be positive")
    if stop_failures < 2:
        raise InvalidParameterError("stop_failures must be at least 2")
    noise_p = noise.rescaled(p)
    if oracle is None:
        oracle = MalignancyOracle(circuit, noise_p, observable)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6d63]))

    shots = 0
    failures = 0
    seen: set = set()
    batch = max(1024, min(65536, int(4.0 * stop_failures / max(p, 1e-12))))
    while shots < max_shots:
        n = min(batch, max_shots - shots)
        for pairs in _sample_events(circuit, noise_p, rng, n):
            shots += 1
            if not pairs:
                continue
            if oracle(pairs):
                failures += 1
                if collected is not None and len(seen) < collect_events:
                    if pairs not in seen:
                        seen.add(pairs)
                        collected.append(pairs)
                if failures == stop_failures:
                    if shots < 2:
                        raise PartialResultError(
                            "stopping shot too early for the estimator",
                            shots, failures)
                    return (stop_failures - 1) / (shots - 1), shots, failures
    raise PartialResultError(
        f"{max_shots} shots yielded only {failures} failures",
        shots, failures)


@dataclass
class SubsetStratum:
    k: int
    prefactor: float      # C(G, k) p^k (1-p)^(G-k)
    fraction: float       # estimated P(fail | k failing gates)
    failures: int
    shots: int
    zero_flagged: bool


@dataclass
class SubsetEstimate:
    rate: float
    strata: List[SubsetStratum]

    def __float__(self) -> float:
        return self.rate

    @property
    def zero_strata(self) -> List[int]:
        return [s.k for s in self.strata if s.zero_flagged]


def subset_sampling_estimate(circuit: Circuit, noise: NoiseModel, p: float,
                             m: int, shots_per_k: int,
                             observable: str = "Z", seed: int = 0,
                             oracle: Optional[MalignancyOracle] = None
                             ) -> SubsetEstimate:
    """Weight-stratified estimate: sum_k C(G,k) p^k (1-p)^(G-k) P(fail | k).

    The binomial prefactor assumes a uniform rate, so region-multiplied
    noise models are rejected.
    """
    if m < 1:
        raise InvalidParameterError("m must be at least 1")
    if p <= 0.0 or p >= 1.0:
        raise InvalidParameterError("p must be in (0, 1)")
    noise_p = noise.rescaled(p)
    if not np.allclose(noise_p.pr, p):
        raise InvalidParameterError(
            "subset sampling requires a uniform noise model")
    if oracle is None:
        oracle = MalignancyOracle(circuit, noise_p, observable)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7373]))
    labels = _circuit_labels(circuit)
    G = circuit.num_gates

    strata: List[SubsetStratum] = []
    total = 0.0
    for k in range(0, m + 1):
        pref = math.comb(G, k) * p ** k * (1.0 - p) ** (G - k)
        if k == 0:
            strata.append(SubsetStratum(0, pref, 0.0, 0, 0, False))
            continue
        fails = 0
        for _ in range(shots_per_k):
            gids = rng.choice(G, size=k, replace=False)
            pairs = _canonical(
                (int(g), labels[g][int(rng.integers(len(labels[g])))])
                for g in gids)
            if oracle(pairs):
                fails += 1
        frac = fails / shots_per_k
        strata.append(SubsetStratum(k, pref, frac, fails, shots_per_k,
                                    fails == 0))
        total += pref * frac
    return SubsetEstimate(total, strata)


@dataclass
class Schedule:
    points: List[float]
    ws: List[float]

    def __post_init__(self):
        for a, b in zip(self.points, self.points[1:]):
            if not b < a:
                raise InvalidParameterError(
                    "schedule points must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def generate_schedule(p_start: float, p_target: float, d: int, G: int,
                      weight_count: Optional[int] = None) -> Schedule:
    """Geometric-ish schedule p_{i+1} = p_i 2^(-1/sqrt(w_i)).

    w_i = max(d/2, p_i * weight_count) with weight_count defaulting to the
    gate count G; passing the decoding-graph edge count instead is the other
    reading of the heuristic.
    """
    if not 0.0 < p_target <= p_start:
        raise InvalidParameterError("need 0 < p_target <= p_start")
    wc = G if weight_count is None else weight_count
    points = [p_start]
    ws = []
    p = p_start
    while p > p_target:
        w = max(d / 2.0, p * wc)
        ws.append(w)
        p = p * 2.0 ** (-1.0 / math.sqrt(w))
        points.append(max(p, p_target))
        p = points[-1]
        if len(points) > 10000:
            raise InvalidParameterError("schedule did not reach the target")
    return Schedule(points, ws)


@dataclass
class ChainState:
    event: PairTuple
    rng: np.random.Generator
    jumps: int = 0
    steps: int = 0


def acceptance_probability(noise: NoiseModel, event: PairTuple,
                           gate_id: int, label: str) -> float:
    """min(1, alpha) for proposing (gate_id, label) from `event`."""
    labels = _circuit_labels(noise.circuit)[gate_id]
    pr = float(noise.pr[gate_id])
    pr_f = 1.0 / len(labels)
    current = dict(event).get(gate_id)
    if current is None:
        return min(1.0, pr * pr_f / (1.0 - pr))
    if label == current:
        return min(1.0, (1.0 - pr) / (pr * pr_f))
    return 1.0


def metropolis_step(chain: ChainState, circuit: Circuit, noise: NoiseModel,
                    oracle: Callable[[PairTuple], bool]) -> ChainState:
    """One proposal of the restricted (malignant-set) Metropolis chain.

    Chooses a gate uniformly, then a fault label uniformly for that gate;
    inserts, deletes (same label), or replaces.  The move commits only if
    the Bernoulli acceptance succeeds and the new event stays malignant.
    """
    labels = _circuit_labels(circuit)
    rng = chain.rng
    g = int(rng.integers(circuit.num_gates))
    labs = labels[g]
    f = labs[0] if len(labs) == 1 else labs[int(rng.integers(len(labs)))]
    chain.steps += 1

    alpha = acceptance_probability(noise, chain.event, g, f)
    if alpha < 1.0 and rng.random() >= alpha:
        return chain

    current = dict(chain.event).get(g)
    if current is None:
        proposal = _canonical(chain.event + ((g, f),))
    elif f == current:
        proposal = tuple(pr for pr in chain.event if pr[0] != g)
    else:
        proposal = _canonical(
            tuple(pr for pr in chain.event if pr[0] != g) + ((g, f),))

    if proposal and oracle(proposal):
        chain.event = proposal
        chain.jumps += 1
    return chain


@dataclass
class RatioEstimate:
    C: float
    n_low: int
    n_high: int
    log_ratios_low: List[float] = field(repr=False, default_factory=list)
    log_ratios_high: List[float] = field(repr=False, default_factory=list)

    def __post_init__(self):
        assert self.C > 0.0
        if self.C > 1.0:
            warnings.warn(
                f"ratio estimate {self.C:.3g} exceeds 1 on a decreasing "
                "schedule", RuntimeWarning)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bennett_solve(log_ratios_i: Sequence[float],
                  log_ratios_i1: Sequence[float]) -> float:
    """Acceptance-ratio solve for C with g(x) = 1/(1+x).

    Inputs are samples of log(pi_{i+1}(E)/pi_i(E)) from the side-i and
    side-(i+1) conditional chains.  The balance condition in log C is
    strictly decreasing, so bisection finds the unique root.
    """
    if not len(log_ratios_i) or not len(log_ratios_i1):
        raise InvalidParameterError("both sample lists must be non-empty")
    lo_arr = np.asarray(log_ratios_i, dtype=float)
    hi_arr = np.asarray(log_ratios_i1, dtype=float)

    def h(t: float) -> float:
        return float(_sigmoid(lo_arr - t).mean() - _sigmoid(t - hi_arr).mean())

    lo, hi = -1.0, 1.0
    while h(lo) <= 0.0:
        lo *= 2.0
        if lo < -700.0:
            raise BennettBracketError("no sign change down to log C = -700")
    while h(hi) >= 0.0:
        hi *= 2.0
        if hi > 700.0:
            raise BennettBracketError("no sign change up to log C = +700")
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def gelman_rubin(per_chain_statistics: Sequence[Sequence[float]]) -> float:
    """Potential scale reduction factor over scalar per-chain sample lists."""
    m = len(per_chain_statistics)
    if m < 2:
        raise InvalidParameterError("need at least 2 chains")
    n = min(len(c) for c in per_chain_statistics)
    if n < 2:
        raise InvalidParameterError("need at least 2 samples per chain")
    chains = np.asarray([list(c)[:n] for c in per_chain_statistics],
                        dtype=float)
    means = chains.mean(axis=1)
    w = float(chains.var(axis=1, ddof=1).mean())
    if w == 0.0:
        raise GelmanRubinUndefinedError("zero within-chain variance")
    b_over_n = float(means.var(ddof=1))
    var_hat = (n - 1) / n * w + b_over_n
    return math.sqrt(var_hat / w)


@dataclass
class FractionEstimate:
    fraction: float
    ci_low: float
    ci_high: float
    malignant: int
    total: int
    mode: str

    def __float__(self) -> float:
        return self.fraction


def _wilson(successes: int, total: int, z: float = 1.96
            ) -> Tuple[float, float]:
    if total == 0:
        return 0.0, 1.0
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total
                         + z * z / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def malignant_fraction(circuit: Circuit, noise: NoiseModel, k: int,
                       mode: str = "exhaustive", budget: int = 2_000_000,
                       observable: str = "Z", seed: int = 0,
                       oracle: Optional[MalignancyOracle] = None
                       ) -> FractionEstimate:
    """Fraction of weight-k events (gate sets x fault assignments) malignant.

    Exhaustive mode enumerates every combination (error if the count
    exceeds the budget); sampled mode draws `budget` events uniformly from
    the same product space and reports a 95% Wilson interval.
    """
    if k < 1:
        raise InvalidParameterError("k must be at least 1")
    if oracle is None:
        oracle = MalignancyOracle(circuit, noise, observable)
    labels = _circuit_labels(circuit)
    table = oracle.table
    decoder = oracle.decoder
    G = circuit.num_gates

    if mode == "exhaustive":
        log_total = 0.0
        total = 0
        # quick overcount guard before enumerating
        max_labels = max(len(l) for l in labels)
        if math.comb(G, k) * max_labels ** k > 50 * budget:
            raise BudgetExceededError(
                "exhaustive enumeration too large; use sampled mode")
        mal = 0
        for gids in combinations(range(G), k):
            for labs in product(*(labels[g] for g in gids)):
                total += 1
                if total > budget:
                    raise BudgetExceededError(
                        "exhaustive enumeration exceeded the budget; "
                        "use sampled mode")
                bits, flips = table.syndrome_bits(zip(gids, labs))
                if decoder.is_malignant_bits(bits, flips):
                    mal += 1
        frac = mal / total
        return FractionEstimate(frac, frac, frac, mal, total, mode)

    if mode != "sampled":
        raise InvalidParameterError("mode must be 'exhaustive' or 'sampled'")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6d66]))
    weights = np.array([float(len(l)) for l in labels])
    weights /= weights.sum()
    mal = 0
    for _ in range(budget):
        while True:
            gids = rng.choice(G, size=k, replace=True, p=weights)
            if len(set(int(g) for g in gids)) == k:
                break
        pairs = [(int(g), labels[g][int(rng.integers(len(labels[g])))])
                 for g in gids]
        bits, flips = table.syndrome_bits(pairs)
        if decoder.is_malignant_bits(bits, flips):
            mal += 1
    frac = mal / budget
    lo, hi = _wilson(mal, budget)
    return FractionEstimate(frac, lo, hi, mal, budget, mode)


@dataclass
class StepRecord:
    p: float
    ratio: float
    ratio_se: float
    rate: float
    rate_se: float
    jumps_min: int
    jumps_max: int
    decoder_calls: int
    rhat: float
    seconds: float
    converged: bool
    samples_low: int
    samples_high: int
    cache_hits: int
    cache_misses: int
    weight_histogram_low: Counter
    weight_histogram_high: Counter


@dataclass
class SplitReport:
    observable: str
    schedule: Schedule
    mc_rate: float
    mc_rate_se: float
    mc_shots: int
    mc_failures: int
    steps: List[StepRecord]
    final_rate: float
    converged: bool
    decoder_calls_total: int
    chain_steps_total: int
    seconds_total: float

    def rates(self) -> List[Tuple[float, float]]:
        """(p, telescoped rate) at every schedule point."""
        out = [(self.schedule.points[0], self.mc_rate)]
        for rec in self.steps:
            out.append((rec.p, rec.rate))
        return out


def _jackknife_ratio_se(samples_lo: List[List[float]],
                        samples_hi: List[List[float]], c_full: float) -> float:
    """Leave-one-chain-out standard error of the Bennett ratio."""
    m = min(len(samples_lo), len(samples_hi))
    if m < 2:
        return float("nan")
    reps = []
    for i in range(m):
        lo = [x for j, c in enumerate(samples_lo) if j != i for x in c]
        hi = [x for j, c in enumerate(samples_hi) if j != i for x in c]
        if not lo or not hi:
            return float("nan")
        try:
            reps.append(bennett_solve(lo, hi))
        except EstimationError:
            return float("nan")
    reps_arr = np.asarray(reps)
    return float(math.sqrt((m - 1) / m * ((reps_arr - reps_arr.mean()) ** 2
                                          ).sum()))


def _chain_rng(seed: int, step: int, side: int, chain: int
               ) -> np.random.Generator:
    # counter-based stream: one Philox key per (seed, step, side, chain),
    # so results are independent of thread scheduling
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF,
                    (step << 20) | (side << 16) | chain], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _thread_count(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("QEC_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def run_chains(circuit: Circuit, noise_chain: NoiseModel,
               oracle: MalignancyOracle, chains: List[ChainState],
               log_ratio_of: Callable[[PairTuple], float],
               min_jumps: int, min_chains_ok: int,
               burn_in: int, sample_every: int, max_samples: int,
               threads: int = 1, done_check: Optional[Callable[[], bool]] = None
               ) -> Tuple[List[List[float]], Counter, List[PairTuple], bool]:
    """Drive one side's chains until the jump criterion (or sample cap).

    Returns (per-chain log-ratio sample lists, visited-weight histogram,
    distinct visited events, converged flag).
    """
    samples: List[List[float]] = [[] for _ in chains]
    hist: Counter = Counter()
    visited: Dict[PairTuple, None] = {}

    def burn(chain: ChainState) -> None:
        for _ in range(burn_in):
            metropolis_step(chain, circuit, noise_chain, oracle)

    def block(idx: int) -> None:
        chain = chains[idx]
        for _ in range(sample_every):
            metropolis_step(chain, circuit, noise_chain, oracle)
        samples[idx].append(log_ratio_of(chain.event))
        hist[len(chain.event)] += 1
        visited[chain.event] = None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(burn, chains))
            for _ in range(max_samples):
                list(pool.map(block, range(len(chains))))
                ok = sum(c.jumps >= min_jumps for c in chains)
                if ok >= min_chains_ok:
                    break
    else:
        for chain in chains:
            burn(chain)
        for _ in range(max_samples):
            for idx in range(len(chains)):
                block(idx)
            ok = sum(c.jumps >= min_jumps for c in chains)
            if ok >= min_chains_ok:
                break
    converged = sum(c.jumps >= min_jumps for c in chains) >= min_chains_ok
    return samples, hist, list(visited), converged


def run_splitting(circuit: Circuit, noise: NoiseModel, schedule: Schedule,
                  chains: int = 20, min_jumps: int = 10,
                  min_chains_ok: int = 18, seed: int = 0,
                  observable: str = "Z", stop_failures: int = 100,
                  max_setup_shots: int = 20_000_000,
                  burn_in_factor: int = 10, sample_every_factor: int = 1,
                  max_samples_per_chain: int = 2000,
                  expire_events: bool = False,
                  freeze_weights_at: Optional[float] = None,
                  table: Optional[SyndromeTable] = None,
                  cache: Optional[FailureCache] = None,
                  threads: Optional[int] = None) -> SplitReport:
    """Multilevel splitting along a decreasing schedule of physical rates.

    Setup estimates the failure rate at the first schedule point by direct
    MC and harvests malignant events; each consecutive pair of points then
    runs restricted chains on both sides until at least min_jumps jumps
    occur in at least min_chains_ok of the chains, and the Bennett solve
    yields the ratio.  Decoder weights are frozen at the geometric mean of
    the schedule endpoints so one cache covers the whole run.
    """
    if chains < 2:
        raise InvalidParameterError("need at least 2 chains")
    if min_chains_ok > chains:
        raise InvalidParameterError("min_chains_ok cannot exceed chains")
    t_start = time.perf_counter()
    points = list(schedule.points)
    p1, pt = points[0], points[-1]
    nthreads = _thread_count(threads)
    G = circuit.num_gates
    if table is None:
        table = SyndromeTable(circuit)
    p_freeze = freeze_weights_at if freeze_weights_at is not None \
        else math.sqrt(p1 * pt)
    decoder = CircuitDecoder(circuit, noise.rescaled(p_freeze), observable,
                             table)
    if cache is None:
        cache = FailureCache()
    oracle = MalignancyOracle(circuit, noise.rescaled(p_freeze), observable,
                              decoder=decoder, table=table, cache=cache)

    pool_events: List[PairTuple] = []
    try:
        mc_rate, mc_shots, mc_failures = mc_estimate(
            circuit, noise, p1, stop_failures, max_setup_shots,
            observable=observable, seed=seed, oracle=oracle,
            collect_events=4 * chains, collected=pool_events)
    except PartialResultError as err:
        raise SetupError(
            f"setup MC found only {err.failures} failures in {err.shots} "
            "shots; raise max_setup_shots or p_start") from err
    if not pool_events:
        raise SetupError("setup MC harvested no malignant events")
    mc_rate_se = mc_rate / math.sqrt(max(mc_failures - 1, 1))

    steps: List[StepRecord] = []
    rate = mc_rate
    burn_in = burn_in_factor * G
    sample_every = sample_every_factor * G
    all_converged = True
    chain_steps_total = 0

    for step in range(len(points) - 1):
        t0 = time.perf_counter()
        p_lo_rate, p_hi_rate = points[step], points[step + 1]
        noise_lo = noise.rescaled(p_lo_rate)
        noise_hi = noise.rescaled(p_hi_rate)
        # log(pi_hi / pi_lo) decomposes into a per-gate pair delta plus a
        # constant; both depend only on the noise structure
        delta = ((np.log(noise_hi.pr) - np.log1p(-noise_hi.pr))
                 - (np.log(noise_lo.pr) - np.log1p(-noise_lo.pr)))
        const = noise_hi.log_prob_empty - noise_lo.log_prob_empty

        def log_ratio_of(pairs: PairTuple) -> float:
            return const + float(sum(delta[g] for g, _ in pairs))

        calls_before = oracle.decode_calls
        hits_before, misses_before = cache.hits, cache.misses

        side_samples: List[List[List[float]]] = []
        side_hists: List[Counter] = []
        side_converged = True
        new_events: List[PairTuple] = []
        all_chains: List[ChainState] = []
        for side, noise_side in ((0, noise_lo), (1, noise_hi)):
            side_chains = [
                ChainState(pool_events[(chain + side * chains)
                                       % len(pool_events)],
                           _chain_rng(seed, step, side, chain))
                for chain in range(chains)]
            samples, hist, visited, ok = run_chains(
                circuit, noise_side, oracle, side_chains, log_ratio_of,
                min_jumps, min_chains_ok, burn_in, sample_every,
                max_samples_per_chain, threads=nthreads)
            side_samples.append(samples)
            side_hists.append(hist)
            side_converged = side_converged and ok
            new_events.extend(visited)
            all_chains.extend(side_chains)

        flat_lo = [x for c in side_samples[0] for x in c]
        flat_hi = [x for c in side_samples[1] for x in c]
        C = bennett_solve(flat_lo, flat_hi)
        RatioEstimate(C, len(flat_lo), len(flat_hi), flat_lo, flat_hi)
        ratio_se = _jackknife_ratio_se(side_samples[0], side_samples[1], C)
        rate = rate * C

        rhat = float("nan")
        try:
            rhat = gelman_rubin(side_samples[1])
        except (EstimationError, InvalidParameterError):
            pass

        if expire_events:
            pool_events = list(dict.fromkeys(new_events)) or pool_events
        else:
            known = set(pool_events)
            pool_events.extend(e for e in dict.fromkeys(new_events)
                               if e not in known)
            if len(pool_events) > 8192:
                pool_events = pool_events[-8192:]

        chain_steps_total += sum(c.steps for c in all_chains)
        rel_var = (mc_rate_se / mc_rate) ** 2 if mc_rate > 0 else 0.0
        for prev in steps:
            rel_var += (prev.ratio_se / prev.ratio) ** 2
        rel_var += (ratio_se / C) ** 2 if C > 0 else 0.0
        steps.append(StepRecord(
            p=p_hi_rate,
            ratio=C,
            ratio_se=ratio_se,
            rate=rate,
            rate_se=rate * math.sqrt(rel_var),
            jumps_min=min(c.jumps for c in all_chains),
            jumps_max=max(c.jumps for c in all_chains),
            decoder_calls=oracle.decode_calls - calls_before,
            rhat=rhat,
            seconds=time.perf_counter() - t0,
            converged=side_converged,
            samples_low=len(flat_lo),
            samples_high=len(flat_hi),
            cache_hits=cache.hits - hits_before,
            cache_misses=cache.misses - misses_before,
            weight_histogram_low=side_hists[0],
            weight_histogram_high=side_hists[1],
        ))
        all_converged = all_converged and side_converged

    return SplitReport(
        observable=observable,
        schedule=schedule,
        mc_rate=mc_rate,
        mc_rate_se=mc_rate_se,
        mc_shots=mc_shots,
        mc_failures=mc_failures,
        steps=steps,
        final_rate=rate,
        converged=all_converged,
        decoder_calls_total=oracle.decode_calls,
        chain_steps_total=chain_steps_total,
        seconds_total=time.perf_counter() - t_start,
    )


def visited_weight_histogram(circuit: Circuit, noise: NoiseModel, p: float,
                             observable: str = "Z", chains: int = 8,
                             samples_per_chain: int = 200,
                             burn_in_factor: int = 10, seed: int = 0,
                             initial_events: Optional[List[PairTuple]] = None,
                             oracle: Optional[MalignancyOracle] = None,
                             threads: Optional[int] = None) -> Counter:
    """Histogram of |E| visited by restricted chains at one physical rate.

    Initial events default to uniformly sampled minimal malignant events
    found by rejection at weight ceil(d/2) and up.
    """
    noise_p = noise.rescaled(p)
    if oracle is None:
        oracle = MalignancyOracle(circuit, noise_p, observable)
    if initial_events is None:
        initial_events = []
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6877]))
        labels = _circuit_labels(circuit)
        G = circuit.num_gates
        k = (circuit.distance + 1) // 2
        tries = 0
        while len(initial_events) < chains:
            tries += 1
            if tries > 2_000_000:
                raise SetupError("could not find initial malignant events")
            if tries % 200_000 == 0:
                k += 1  # widen the search if minimal-weight events are rare
            gids = rng.choice(G, size=k, replace=False)
            pairs = _canonical(
                (int(g), labels[g][int(rng.integers(len(labels[g])))])
                for g in gids)
            if oracle(pairs):
                initial_events.append(pairs)
    chain_list = [ChainState(initial_events[c % len(initial_events)],
                             _chain_rng(seed, 0, 2, c))
                  for c in range(chains)]
    _, hist, _, _ = run_chains(
        circuit, noise_p, oracle, chain_list, lambda pairs: 0.0,
        min_jumps=1 << 30, min_chains_ok=chains,
        burn_in=burn_in_factor * circuit.num_gates,
        sample_every=circuit.num_gates, max_samples=samples_per_chain,
        threads=_thread_count(threads))
    return hist
