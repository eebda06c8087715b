import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rateex.errors import AlphaZero, InvalidRates, TooManyOutcomes, TrialsZero, ValidationError
from rateex.model import bsc_instance, instance_from_factors, validate_dm_instance
from rateex.qbt_sim import (
    EncoderSpec,
    NpInstance,
    ScalarGaussianSource,
    beta_curve,
    binary_entropy,
    block_pushforward,
    build_np_instance,
    confidence_radius,
    divergence_identity_check,
    empirical_exponent_curve,
    log_sum_beta_bound,
    lp_oracle,
    np_oracle,
    np_test,
    qbt_simulate,
    single_letter_ceiling,
)

from .conftest import random_pmf


def brute_force_beta(p, q, eps):
    """Optimal randomized test by enumeration: some vertex has at most one fractional coordinate."""
    need = 1 - eps
    m = len(p)
    best = math.inf
    for r in range(m + 1):
        for A in itertools.combinations(range(m), r):
            pa, qa = sum(p[i] for i in A), sum(q[i] for i in A)
            if pa >= need - 1e-15:
                best = min(best, qa)
                continue
            for i in set(range(m)) - set(A):
                if p[i] > 0 and pa + p[i] >= need:
                    best = min(best, qa + q[i] * (need - pa) / p[i])
    return best


def random_np(r, m):
    alpha = float(r.choice([0.5, 1.0, 5.0]))
    p = r.dirichlet(np.full(m, alpha)) + 1e-6
    q = r.dirichlet(np.full(m, alpha)) + 1e-6
    if m > 1 and r.uniform() < 0.3:
        p[r.integers(m)] = 0.0
    if m > 1 and r.uniform() < 0.3:
        q[r.integers(m)] = 0.0
    return p / p.sum(), q / q.sum()


def test_textbook_example():
    inst = NpInstance(np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5]), 0.2)
    assert np_oracle(inst) == pytest.approx(0.5, abs=1e-15)
    r = np_test(inst)
    assert r.randomization == pytest.approx(1.0)
    assert r.threshold_llr == pytest.approx(0.0, abs=1e-15)


@given(st.integers(0, 2**31 - 1), st.integers(1, 7), st.floats(0.0, 0.99))
def test_np_matches_brute_force(seed, m, eps):
    r = np.random.default_rng(seed)
    p, q = random_np(r, m)
    inst = NpInstance(p, q, eps)
    assert np_oracle(inst) == pytest.approx(brute_force_beta(p, q, eps), abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 64), st.floats(0.0, 0.99))
def test_np_matches_lp(seed, m, eps):
    r = np.random.default_rng(seed)
    p, q = random_np(r, m)
    inst = NpInstance(p, q, eps)
    assert abs(np_oracle(inst) - lp_oracle(inst)) <= 1e-12


@given(st.integers(0, 2**31 - 1))
def test_beta_nonincreasing_in_eps(seed):
    r = np.random.default_rng(seed)
    p, q = random_np(r, 12)
    b = beta_curve(p, q, np.linspace(0, 1, 41))
    assert np.all(np.diff(b) <= 1e-15)
    assert b[-1] == 0.0


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.95))
def test_log_sum_lower_bound(seed, eps):
    r = np.random.default_rng(seed)
    p = r.dirichlet(np.ones(10))
    q = r.dirichlet(np.ones(10))
    inst = NpInstance(p, q, eps)
    assert np_oracle(inst) >= log_sum_beta_bound(inst.divergence(), 1 - eps) * (1 - 1e-12)


def test_log_sum_bound_errors():
    with pytest.raises(AlphaZero):
        log_sum_beta_bound(0.1, 0.0)
    assert log_sum_beta_bound(0.0, 1.0) == 1.0


def test_np_detector_variants_consistent(rng):
    p, q = random_np(rng, 20)
    r = np_test(NpInstance(p, q, 0.1))
    # randomized acceptance reproduces 1 - eps exactly
    acc = p[r.accept_strict].sum() + r.randomization * p[r.accept_atom].sum()
    assert acc == pytest.approx(0.9, abs=1e-9)
    assert r.beta_deterministic >= r.beta - 1e-15
    assert r.alpha_deterministic <= 0.1 + 1e-12


def test_np_instance_validation():
    with pytest.raises(ValidationError):
        NpInstance(np.array([0.5, np.nan]), np.array([0.5, 0.5]), 0.1)
    with pytest.raises(ValidationError):
        NpInstance(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.5)
    with pytest.raises(TooManyOutcomes):
        np_test(NpInstance(np.full(10, 0.1), np.full(10, 0.1), 0.1), limit=5)


def binomial_beta(n, eps, c=0.1):
    """BSC(c), uniform X, identity encoder: the LLR depends only on the agreement count."""
    a = np.arange(n, -1, -1)
    pa = stats.binom.pmf(a, n, 1 - c)
    qa = stats.binom.pmf(a, n, 0.5)
    need, beta = 1 - eps, 0.0
    for pi, qi in zip(pa, qa):
        take = min(pi, need)
        beta += qi * take / pi
        need -= take
        if need <= 1e-15:
            break
    return beta


@pytest.mark.parametrize("n", range(1, 9))
def test_exponent_curve_against_binomial_oracle(n):
    inst = bsc_instance(0.1)
    (pt,) = empirical_exponent_curve(inst, EncoderSpec.identity(inst), 0.2, [n])
    assert pt.beta == pytest.approx(binomial_beta(n, 0.2), rel=1e-10)
    assert pt.ceiling == pytest.approx(math.log(2) - binary_entropy(0.1), abs=1e-14)
    assert pt.exponent_exact <= pt.upper_envelope + 1e-12
    assert pt.beta >= pt.log_sum_bound


def quantizer_instance(r):
    inst = instance_from_factors(random_pmf(r, (2, 2)), [r.dirichlet(np.ones(3), size=(2, 2)) for _ in range(2)])
    enc = EncoderSpec((np.array([0, 1, 1]), np.array([0, 0, 1])))
    return inst, enc


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]))
def test_divergence_identity(seed, n):
    r = np.random.default_rng(seed)
    inst, enc = quantizer_instance(r)
    for e in (enc, EncoderSpec.identity(inst)):
        lhs, rhs, diff = divergence_identity_check(inst, e, n)
        assert diff <= 1e-12


def test_divergence_exceeds_information_for_mismatched_alternative():
    base = bsc_instance(0.1)
    Q = np.einsum("x,y->xy", [0.6, 0.4], [0.5, 0.5])[:, None, :]
    inst = validate_dm_instance(base.P, Q, check_marginals=False)
    lhs, rhs, diff = divergence_identity_check(inst, EncoderSpec.identity(inst), 1)
    # D = I + D(P_X || Q_X) when only the X marginal is off
    dx = 0.5 * math.log(0.5 / 0.6) + 0.5 * math.log(0.5 / 0.4)
    assert lhs - rhs == pytest.approx(dx, abs=1e-14)
    assert diff > 1e-6


def test_block_encoders_and_ceiling():
    inst = bsc_instance(0.1)
    # parity of two letters: one bit per block
    enc = EncoderSpec((np.array([0, 1, 1, 0]),), block=2)
    bp = block_pushforward(inst, enc)
    assert bp.p.shape == (2, 4, 1)
    c = single_letter_ceiling(inst, enc)
    assert 0 < c < math.log(2) - binary_entropy(0.1)
    with pytest.raises(ValidationError):
        build_np_instance(inst, enc, 3)
    with pytest.raises(ValidationError):
        EncoderSpec((np.array([0, 2]),), sizes=(2,))


def test_simulation_np_detector_matches_exact():
    inst = bsc_instance(0.1)
    enc = EncoderSpec.identity(inst)
    res = qbt_simulate(inst, enc, n=6, trials=40_000, eps=0.2, seed=5, detector="np")
    exact = binomial_beta(6, 0.2)
    assert abs(res.beta_hat - exact) <= res.beta_radius + 1e-3
    assert abs(res.alpha_hat - 0.2) <= res.alpha_radius + 1e-3
    j = res.to_json()
    assert set(j) >= {"n", "alpha_hat", "beta_hat", "ci", "seed"}


def test_simulation_determinism_and_threads(monkeypatch):
    inst = bsc_instance(0.1)
    enc = EncoderSpec.identity(inst)
    monkeypatch.setenv("RATEEX_THREADS", "1")
    a = qbt_simulate(inst, enc, n=4, trials=5000, eps=0.1, seed=9, detector="typicality")
    monkeypatch.setenv("RATEEX_THREADS", "4")
    b = qbt_simulate(inst, enc, n=4, trials=5000, eps=0.1, seed=9, detector="typicality")
    assert a.to_json() == b.to_json()
    c = qbt_simulate(inst, enc, n=4, trials=5000, eps=0.1, seed=10, detector="typicality")
    assert c.to_json() != a.to_json()


def test_calibrated_constant_encoder():
    inst = bsc_instance(0.1)
    res = qbt_simulate(inst, EncoderSpec.constant(inst), n=4, trials=20_000, eps=0.2, seed=1, detector="calibrated")
    # the message carries nothing, so beta tracks 1 - eps
    assert abs(res.alpha_hat - 0.2) < 0.02
    assert abs(res.beta_hat - 0.8) < 0.02


def test_gaussian_source_simulation():
    src = ScalarGaussianSource(1.0, (1.0,), (-0.5, 0.5), (0.0,))
    ref = src.reference()
    enc = EncoderSpec.identity(ref)
    res = qbt_simulate(src, enc, n=3, trials=20_000, eps=0.1, seed=2, detector="np")
    ex = build_np_instance(ref, enc, 3, 0.1)
    assert abs(res.beta_hat - np_oracle(ex.np_instance)) <= res.beta_radius + 2e-3


def test_simulation_errors():
    inst = bsc_instance(0.1)
    enc = EncoderSpec.identity(inst)
    with pytest.raises(TrialsZero):
        qbt_simulate(inst, enc, n=2, trials=0)
    with pytest.raises(InvalidRates):
        qbt_simulate(inst, enc, n=2, trials=10, rates=[0.1])
    with pytest.raises(ValidationError):
        qbt_simulate(inst, enc, n=2, trials=10, detector="magic")


def test_confidence_radius():
    assert confidence_radius(0.5, 10_000) == pytest.approx(2.576 * 0.005)
    assert confidence_radius(0.0, 100) == 0.0
