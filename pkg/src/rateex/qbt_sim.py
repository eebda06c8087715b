"""Finite-blocklength layer: exact Neyman-Pearson optimum, divergence checks, Monte Carlo.

Messages come from deterministic block maps phi_k : Y_k^b -> {0..m_k-1}
applied to consecutive blocks of b letters (b = 1 is a symbolwise quantizer).
Because blocks are i.i.d., the pushforward of (messages, X^n, Y0^n) is an
l-fold product (n = l b) of a single-block pmf, under both hypotheses. Under
the alternative the pushforward is Q_{Y0} Q_{X|Y0} Q_{M|Y0} automatically,
since X and the sensors are conditionally independent given Y0.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .dm_region import JointPmfTensor, conditional_mutual_information
from .errors import (
    AlphaZero,
    InvalidRates,
    TooManyOutcomes,
    TrialsZero,
    ValidationError,
)
from .model import DiscreteHTInstance, discretize_scalar_gaussian

DEFAULT_OUTCOME_LIMIT = 10**7
Z_99 = 2.576
DEFAULT_MU_C = 0.5
CHUNK_TRIALS = 2048
SCHEMA_VERSION = "1"


def binary_entropy(u: float) -> float:
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return -u * math.log(u) - (1 - u) * math.log1p(-u)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RATEEX_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Neyman-Pearson
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NpInstance:
    """Outcome masses under H0 (p) and H1 (q) plus the Type-I budget."""

    p: np.ndarray
    q: np.ndarray
    eps: float

    def __post_init__(self):
        p = np.asarray(self.p, float).ravel()
        q = np.asarray(self.q, float).ravel()
        if p.shape != q.shape:
            raise ValidationError("p and q must have the same number of outcomes")
        for name, m in (("p", p), ("q", q)):
            if not np.isfinite(m).all() or (m < 0).any() or abs(m.sum() - 1.0) > 1e-9:
                raise ValidationError(f"{name} must be a pmf")
        if not 0.0 <= self.eps <= 1.0:
            raise ValidationError("eps must lie in [0, 1]")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def size(self) -> int:
        return self.p.size

    def divergence(self) -> float:
        m = self.p > 0
        if (self.q[m] == 0).any():
            return math.inf
        return float(np.sum(self.p[m] * (np.log(self.p[m]) - np.log(self.q[m]))))


@dataclass
class NpResult:
    beta: float
    threshold_llr: float
    randomization: float
    beta_deterministic: float
    alpha_deterministic: float
    accept_strict: np.ndarray = field(repr=False)
    accept_atom: np.ndarray = field(repr=False)


def _llr(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(q > 0, np.log(np.where(p > 0, p, 1.0)) - np.log(np.where(q > 0, q, 1.0)), np.inf)


def _atom_fraction(rem: float, mass: float) -> float:
    """rem / mass clipped to [0, 1]; residuals within a few ulp of 1 snap to the ends,
    since 1 - eps itself is only known to that precision."""
    if mass <= 0 or rem <= 4e-16:
        return 0.0
    if rem >= mass - 4e-16:
        return 1.0
    return rem / mass


def np_test(inst: NpInstance, limit: int = DEFAULT_OUTCOME_LIMIT, tie_tol: float = 1e-9) -> NpResult:
    """Optimal randomized test accepting H0 with P-probability exactly 1 - eps.

    Outcomes are ranked by log-likelihood ratio (q = 0 first); the group of
    outcomes at the threshold is accepted with probability ``randomization``.
    The deterministic variant accepts the whole threshold group.
    """
    if inst.size > limit:
        raise TooManyOutcomes(f"{inst.size} outcomes exceed the limit {limit}")
    p, q = inst.p, inst.q
    live = (p > 0) | (q > 0)
    llr = _llr(p, q)
    llr = np.where(p > 0, llr, -np.inf)
    need = 1.0 - inst.eps
    n = p.size
    strict = np.zeros(n, bool)
    atom = np.zeros(n, bool)
    if need <= 0.0:
        return NpResult(0.0, math.inf, 0.0, 0.0, 1.0, strict, atom)
    order = np.argsort(-llr, kind="stable")
    # accepting a p = 0 outcome never helps, so the greedy runs over p > 0 only
    order = order[p[order] > 0]
    # exact greedy over single outcomes; ties do not change the optimum
    cp = np.cumsum(p[order])
    cq = np.cumsum(q[order])
    # cap at the summed mass so rounding never pulls in the p = 0 tail
    need = min(need, math.fsum(p))
    j = min(int(np.searchsorted(cp, need, side="left")), len(order) - 1)
    q_before = math.fsum(q[order[:j]])
    pj, qj = p[order[j]], q[order[j]]
    # correctly rounded residual; it is divided by a possibly tiny atom mass
    rem = math.fsum([need, *(-p[order[:j]])])
    frac = _atom_fraction(rem, pj)
    beta = q_before + frac * qj
    # threshold group (ties within tolerance) for randomized detectors
    thr = float(llr[order[j]])
    with np.errstate(invalid="ignore"):
        if math.isfinite(thr):
            tol = tie_tol * max(1.0, abs(thr))
            strict = (llr > thr + tol) & live
            atom = (np.abs(llr - thr) <= tol) & live
        else:
            strict = (llr > thr) & live
            atom = (llr == thr) & live
    ps, pa = float(p[strict].sum()), float(p[atom].sum())
    rho = 0.0 if pa == 0 else min(1.0, max(0.0, (need - ps) / pa))
    return NpResult(
        beta=float(min(max(beta, 0.0), 1.0)),
        threshold_llr=thr,
        randomization=float(rho),
        beta_deterministic=float(q[strict].sum() + q[atom].sum()),
        alpha_deterministic=float(max(0.0, 1.0 - ps - pa)),
        accept_strict=strict,
        accept_atom=atom,
    )


def np_oracle(inst: NpInstance, limit: int = DEFAULT_OUTCOME_LIMIT) -> float:
    """Minimal Type-II error over randomized tests with Type-I error <= eps."""
    return np_test(inst, limit).beta


def lp_oracle(inst: NpInstance) -> float:
    """Same optimum from the linear program min q.t s.t. p.t >= 1-eps, 0 <= t <= 1.

    The solver's vertex is polished by complementary slackness with its dual
    price lam: coordinates with negative reduced cost q_i - lam p_i are set
    to 1, positive to 0, and the marginal ones are refilled in the solver's
    order until the constraint holds with equality. This removes
    solver-tolerance effects on outcomes with negligible mass.
    """
    p, q = inst.p, inst.q
    need = min(1.0 - inst.eps, math.fsum(p))
    if need <= 0:
        return 0.0
    res = optimize.linprog(
        q,
        A_ub=-p[None, :],
        b_ub=[-need * (1 - 1e-12)],  # slack for rounding in the solver's row sums
        bounds=[(0.0, 1.0)] * p.size,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise ValidationError(f"LP failed: {res.message}")
    lam = -float(res.ineqlin.marginals[0])
    red = q - lam * p
    scale = q + lam * p
    x = res.x
    marginal = (np.abs(red) <= 1e-12 * np.maximum(scale, 1e-300)) | ((x > 1e-9) & (x < 1 - 1e-9))
    t = np.where(red < 0, 1.0, 0.0)
    t[marginal] = np.clip(x[marginal], 0.0, 1.0)
    rem = math.fsum([need, *(-(p * t)[~marginal])])
    if marginal.any():
        # refill the marginal coordinates in the solver's preference order
        idx = np.flatnonzero(marginal)
        idx = idx[np.argsort(-x[idx], kind="stable")]
        t[idx] = 0.0
        for i in idx:
            f = _atom_fraction(rem, p[i])
            t[i] = f
            rem = math.fsum([rem, -p[i] * f])
            if f < 1.0:
                break
    return math.fsum(q * t)


def beta_curve(inst_p, inst_q, eps_grid: Sequence[float]) -> np.ndarray:
    return np.array([np_oracle(NpInstance(inst_p, inst_q, float(e))) for e in eps_grid])


def log_sum_beta_bound(D: float, alpha: float) -> float:
    """exp(-(D + h2(alpha)) / alpha): lower bound on the Type-II error of any
    test whose H0-acceptance probability is alpha."""
    if alpha <= 0.0:
        raise AlphaZero("acceptance probability alpha must be positive")
    if alpha > 1.0 or D < 0:
        raise ValidationError("need D >= 0 and alpha in (0, 1]")
    return math.exp(-(D + binary_entropy(alpha)) / alpha)


# ---------------------------------------------------------------------------
# encoders and exact pushforwards
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CodebookSpec:
    """Random-codebook quantize-and-bin parameters (exploratory mode).

    ``rates_hat`` sets the codebook sizes, the rates passed to the simulator
    set the bin counts; sizes are ceil(exp(n * rate)).
    """

    rates_hat: tuple[float, ...]
    test_channels: tuple[np.ndarray, ...] = ()
    seed: int = 0
    smoothing: float = 0.1


@dataclass(frozen=True, eq=False)
class EncoderSpec:
    """Per-sensor deterministic maps on blocks of ``block`` letters.

    ``maps[k]`` has |Y_k|^block entries; the block (y_1..y_b) is indexed with
    y_1 most significant. Message alphabet sizes default to max + 1.
    """

    maps: tuple[np.ndarray, ...]
    block: int = 1
    sizes: tuple[int, ...] = ()
    codebook: CodebookSpec | None = None

    def __post_init__(self):
        maps = tuple(np.asarray(m, dtype=np.int64).ravel() for m in self.maps)
        if self.block < 1:
            raise ValidationError("block length must be >= 1")
        sizes = tuple(self.sizes) or tuple(int(m.max()) + 1 if m.size else 1 for m in maps)
        if len(sizes) != len(maps):
            raise ValidationError("one message alphabet size per sensor")
        for k, (m, s) in enumerate(zip(maps, sizes), start=1):
            if s < 1 or (m < 0).any() or (m >= s).any():
                raise ValidationError(f"map {k} must take values in 0..{s - 1}")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def identity(cls, instance: DiscreteHTInstance) -> "EncoderSpec":
        return cls(tuple(np.arange(instance.shape[k + 1]) for k in range(1, instance.K + 1)))

    @classmethod
    def constant(cls, instance: DiscreteHTInstance) -> "EncoderSpec":
        return cls(tuple(np.zeros(instance.shape[k + 1], int) for k in range(1, instance.K + 1)))

    def check(self, instance: DiscreteHTInstance):
        if len(self.maps) != instance.K:
            raise ValidationError(f"need {instance.K} encoder maps, got {len(self.maps)}")
        for k, m in enumerate(self.maps, start=1):
            if m.size != instance.shape[k + 1] ** self.block:
                raise ValidationError(f"map {k} needs {instance.shape[k + 1] ** self.block} entries")


@dataclass
class BlockPushforward:
    """Single-block pushforward over (M, X^b, Y0^b), M the joint message."""

    p: np.ndarray  # shape (|M|, |X|^b, |Y0|^b)
    q: np.ndarray
    source_to_outcome: np.ndarray  # flat source-block index -> flat outcome index


def _kron_power(v: np.ndarray, b: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(b):
        out = np.multiply.outer(out, v).ravel()
    return out


def block_pushforward(instance: DiscreteHTInstance, encoders: EncoderSpec, limit: int = DEFAULT_OUTCOME_LIMIT) -> BlockPushforward:
    encoders.check(instance)
    b = encoders.block
    shape = instance.shape
    L = instance.P.size
    if L**b > limit:
        raise TooManyOutcomes(f"{L ** b} source blocks exceed the limit {limit}")
    # letter digits (x, y0, y1..yK) for every letter of every source block
    blocks = np.arange(L**b)
    letters = np.stack(np.unravel_index(blocks, (L,) * b), axis=1) if b > 1 else blocks[:, None]
    comps = np.unravel_index(letters, shape)  # tuple over variables, each (L^b, b)
    weights = lambda sizes_: np.array([sizes_ ** (b - 1 - i) for i in range(b)], dtype=np.int64)
    x_idx = comps[0] @ weights(shape[0])
    y0_idx = comps[1] @ weights(shape[1])
    msg = np.zeros(L**b, dtype=np.int64)
    for k in range(instance.K):
        yk = comps[2 + k] @ weights(shape[2 + k])
        msg = msg * encoders.sizes[k] + encoders.maps[k][yk]
    n_m = int(np.prod(encoders.sizes))
    nx, ny0 = shape[0] ** b, shape[1] ** b
    out_idx = (msg * nx + x_idx) * ny0 + y0_idx
    size = n_m * nx * ny0
    p = np.bincount(out_idx, weights=_kron_power(instance.P.ravel(), b), minlength=size)
    q = np.bincount(out_idx, weights=_kron_power(instance.Q.ravel(), b), minlength=size)
    return BlockPushforward(p.reshape(n_m, nx, ny0), q.reshape(n_m, nx, ny0), out_idx)


@dataclass
class ExactInstance:
    np_instance: NpInstance
    tensor: JointPmfTensor  # P pushforward with axes M1, X1, Y01, M2, ...
    q_tensor: np.ndarray
    blocks: int


def build_np_instance(
    instance: DiscreteHTInstance,
    encoders: EncoderSpec,
    n: int,
    eps: float = 0.0,
    limit: int = DEFAULT_OUTCOME_LIMIT,
) -> ExactInstance:
    """Exact pmfs of (phi(Y1^n)..phi(YK^n), X^n, Y0^n) under both hypotheses."""
    b = encoders.block
    if n < 1 or n % b:
        raise ValidationError(f"blocklength {n} must be a positive multiple of the block size {b}")
    l = n // b
    bp = block_pushforward(instance, encoders, limit)
    per = bp.p.size
    if per**l > limit:
        raise TooManyOutcomes(f"{per ** l} outcomes exceed the limit {limit}")
    p = _kron_power(bp.p.ravel(), l)
    q = _kron_power(bp.q.ravel(), l)
    axes_shape = bp.p.shape * l
    labels = tuple(f"{v}{j}" for j in range(1, l + 1) for v in ("M", "X", "Y0_"))
    tensor = JointPmfTensor(p.reshape(axes_shape), labels)
    return ExactInstance(NpInstance(p, q, eps), tensor, q.reshape(axes_shape), l)


def _cmi_blocks(tensor: JointPmfTensor, l: int) -> float:
    return conditional_mutual_information(
        tensor,
        [f"M{j}" for j in range(1, l + 1)],
        [f"X{j}" for j in range(1, l + 1)],
        [f"Y0_{j}" for j in range(1, l + 1)],
    )


def divergence_identity_check(instance: DiscreteHTInstance, encoders: EncoderSpec, n: int) -> tuple[float, float, float]:
    """(D(P_{M,X^n,Y0^n} || Q_{M,X^n,Y0^n}), I(M; X^n | Y0^n), |difference|)."""
    ex = build_np_instance(instance, encoders, n)
    lhs = ex.np_instance.divergence()
    rhs = _cmi_blocks(ex.tensor, ex.blocks)
    return lhs, rhs, abs(lhs - rhs)


def single_letter_ceiling(instance: DiscreteHTInstance, encoders: EncoderSpec) -> float:
    """I(phi(Y^b); X^b | Y0^b) / b for one block."""
    bp = block_pushforward(instance, encoders)
    t = JointPmfTensor(bp.p, ("M", "X", "Y0"))
    return conditional_mutual_information(t, "M", "X", "Y0") / encoders.block


@dataclass
class CurvePoint:
    n: int
    beta: float
    exponent_exact: float
    ceiling: float
    upper_envelope: float
    divergence: float
    log_sum_bound: float


def empirical_exponent_curve(
    instance: DiscreteHTInstance,
    encoders: EncoderSpec,
    eps: float,
    n_range: Sequence[int],
    limit: int = DEFAULT_OUTCOME_LIMIT,
) -> list[CurvePoint]:
    """Exact -(1/n) ln beta(n, eps) for a fixed encoder, with the single-letter ceiling.

    ``upper_envelope`` is (n I + h2(a)) / (n a) with a = 1 - eps: the largest
    value -(1/n) ln beta can take by the log-sum inequality.
    """
    ceiling = single_letter_ceiling(instance, encoders)
    a = 1.0 - eps
    out = []
    for n in n_range:
        ex = build_np_instance(instance, encoders, int(n), eps, limit)
        beta = np_oracle(ex.np_instance, limit)
        D = ex.np_instance.divergence()
        expo = -math.log(beta) / n if beta > 0 else math.inf
        env = (n * ceiling + binary_entropy(a)) / (n * a) if a > 0 else math.inf
        lsb = log_sum_beta_bound(D, a) if a > 0 else 0.0
        out.append(CurvePoint(int(n), beta, expo, ceiling, env, D, lsb))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarGaussianSource:
    """Real scalar source X ~ N(0, sigma_x2), Yk = X + Zk, digitized by interior cut points."""

    sigma_x2: float
    sigmas2: tuple[float, ...]
    x_edges: tuple[float, ...]
    y_edges: tuple[float, ...]

    def reference(self) -> DiscreteHTInstance:
        return discretize_scalar_gaussian(self.sigma_x2, list(self.sigmas2), list(self.x_edges), list(self.y_edges))


@dataclass
class SimResult:
    alpha_hat: float
    beta_hat: float
    alpha_radius: float
    beta_radius: float
    trials: int
    seed: int
    n: int
    detector: str
    mu: float | None = None

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "ci": {"alpha": self.alpha_radius, "beta": self.beta_radius, "z": Z_99},
            "seed": self.seed,
            "trials": self.trials,
            "detector": self.detector,
            "mu": self.mu,
        }


def confidence_radius(p: float, trials: int, z: float = Z_99) -> float:
    return z * math.sqrt(max(p * (1 - p), 0.0) / trials)


def _chunk_rng(seed: int, chunk: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, chunk])))


class _DiscreteSampler:
    def __init__(self, instance: DiscreteHTInstance):
        self.shape = instance.shape
        self.cp = np.cumsum(instance.P.ravel())
        self.cq = np.cumsum(instance.Q.ravel())

    def letters(self, rng, hyp: int, size) -> np.ndarray:
        c = self.cp if hyp == 0 else self.cq
        idx = np.searchsorted(c, rng.random(size) * c[-1], side="right")
        return np.minimum(idx, c.size - 1)


class _GaussianSampler:
    def __init__(self, src: ScalarGaussianSource, ref: DiscreteHTInstance):
        self.src = src
        self.shape = ref.shape

    def letters(self, rng, hyp: int, size) -> np.ndarray:
        s = self.src
        x = rng.standard_normal(size) * math.sqrt(s.sigma_x2)
        # under the alternative the sensors see an independent copy of X
        xs = x if hyp == 0 else rng.standard_normal(size) * math.sqrt(s.sigma_x2)
        digits = [np.digitize(x, s.x_edges), np.zeros(size, dtype=np.int64)]
        for s2 in s.sigmas2:
            y = xs + rng.standard_normal(size) * math.sqrt(s2)
            digits.append(np.digitize(y, s.y_edges))
        return np.ravel_multi_index(tuple(digits), self.shape)


def _super_letters(letters: np.ndarray, L: int, b: int) -> np.ndarray:
    T, n = letters.shape
    blk = letters.reshape(T, n // b, b)
    w = np.array([L ** (b - 1 - i) for i in range(b)], dtype=np.int64)
    return blk @ w


def qbt_simulate(
    source,
    encoders: EncoderSpec,
    n: int,
    trials: int,
    eps: float = 0.05,
    seed: int = 0,
    rates: Sequence[float] | None = None,
    detector: str = "typicality",
    mu_c: float = DEFAULT_MU_C,
    calibration_trials: int | None = None,
) -> SimResult:
    """Monte Carlo estimate of the two error probabilities.

    ``source`` is a DiscreteHTInstance or a ScalarGaussianSource. Detectors:
    ``typicality`` accepts H0 iff the joint type of the block outcomes is
    within mu = mu_c / sqrt(n) of the H0 pushforward in total variation;
    ``calibrated`` uses the same statistic with a threshold set (with a
    randomized atom) from a separate H0 calibration sample so the Type-I
    error is near eps; ``np`` is the exact Neyman-Pearson test (enumerable n).
    With ``encoders.codebook`` set, the random quantize-and-bin encoder is
    used (typicality detector only).

    Trials are split into fixed chunks; chunk c draws from a Philox stream
    keyed by (seed, hypothesis, c), so results do not depend on RATEEX_THREADS.
    """
    if trials < 1:
        raise TrialsZero("trials must be >= 1")
    if n < 1:
        raise ValidationError("blocklength must be >= 1")
    if isinstance(source, ScalarGaussianSource):
        instance = source.reference()
        sampler = _GaussianSampler(source, instance)
    elif isinstance(source, DiscreteHTInstance):
        instance = source
        sampler = _DiscreteSampler(instance)
    else:
        raise ValidationError("source must be a discrete instance or a scalar Gaussian source")
    if rates is not None:
        r = np.asarray(rates, float)
        if r.shape != (instance.K,) or (r < 0).any() or not np.isfinite(r).all():
            raise InvalidRates(f"need {instance.K} finite non-negative rates")
    if encoders.codebook is not None:
        return _simulate_codebook(instance, sampler, encoders, n, trials, seed, rates, mu_c)

    encoders.check(instance)
    b = encoders.block
    if n % b:
        raise ValidationError(f"blocklength {n} must be a multiple of the block size {b}")
    if rates is not None:
        for k, s in enumerate(encoders.sizes):
            if math.log(s) > b * rates[k] + 1e-12:
                raise InvalidRates(f"map {k + 1} uses {s} messages per block, more than exp(b R_{k + 1})")
    l = n // b
    L = instance.P.size
    bp = block_pushforward(instance, encoders)
    ref = bp.p.ravel()
    table = bp.source_to_outcome
    A = ref.size
    mu = mu_c / math.sqrt(n)

    if detector == "np":
        ex = build_np_instance(instance, encoders, n, eps)
        res = np_test(ex.np_instance)
        llr1 = _llr(bp.p.ravel(), bp.q.ravel())
        llr1 = np.where(bp.p.ravel() > 0, llr1, -np.inf)
        thr, rho = res.threshold_llr, res.randomization
        tol = 1e-9 * max(1.0, abs(thr)) if math.isfinite(thr) else 0.0

        def decide(outcomes, rng):
            s = llr1[outcomes].sum(axis=1)
            u = rng.random(len(s))
            strictly = s > thr + tol
            at = np.abs(s - thr) <= tol if math.isfinite(thr) else s == thr
            return strictly | (at & (u < rho))

    elif detector in ("typicality", "calibrated"):
        thr_tv, rho = mu, 0.0

        def tv(outcomes):
            counts = np.zeros((outcomes.shape[0], A))
            np.add.at(counts, (np.repeat(np.arange(outcomes.shape[0]), l), outcomes.ravel()), 1.0)
            return 0.5 * np.abs(counts / l - ref[None, :]).sum(axis=1)

        if detector == "calibrated":
            ct = calibration_trials or max(trials, 10_000)
            stats_ = np.concatenate(
                [tv(table[_super_letters(sampler.letters(_chunk_rng(seed, c, 2), 0, (m, n)), L, b)])
                 for c, m in _chunks(ct)]
            )
            thr_tv, rho = _randomized_quantile(stats_, 1.0 - eps)

        def decide(outcomes, rng):
            t = tv(outcomes)
            u = rng.random(len(t))
            return (t < thr_tv - 1e-12) | ((np.abs(t - thr_tv) <= 1e-12) & (u < (1.0 if detector == "typicality" else rho)))

    else:
        raise ValidationError(f"unknown detector {detector!r}")

    def run(hyp: int, c: int, m: int) -> int:
        rng = _chunk_rng(seed, c, hyp)
        letters = sampler.letters(rng, hyp, (m, n))
        acc = decide(table[_super_letters(letters, L, b)], rng)
        return int(acc.sum())

    accepted = [_map_chunks(lambda cm, h=h: run(h, *cm), _chunks(trials)) for h in (0, 1)]
    alpha = 1.0 - accepted[0] / trials
    beta = accepted[1] / trials
    return SimResult(alpha, beta, confidence_radius(alpha, trials), confidence_radius(beta, trials), trials, seed, n, detector, None if detector == "np" else mu)


def _chunks(total: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK_TRIALS, total - c * CHUNK_TRIALS)) for c in range((total + CHUNK_TRIALS - 1) // CHUNK_TRIALS)]


def _map_chunks(fn, chunks) -> int:
    workers = _threads()
    if workers == 1 or len(chunks) == 1:
        return sum(fn(c) for c in chunks)
    with ThreadPoolExecutor(workers) as ex:
        return sum(ex.map(fn, chunks))


def _randomized_quantile(stats_: np.ndarray, level: float) -> tuple[float, float]:
    """Threshold t and atom probability rho with P(S < t) + rho P(S = t) = level."""
    s = np.sort(stats_)
    k = min(int(math.ceil(level * len(s))) - 1, len(s) - 1)
    if k < 0:
        return -math.inf, 0.0
    t = s[k]
    below = np.count_nonzero(s < t - 1e-12)
    at = np.count_nonzero(np.abs(s - t) <= 1e-12)
    rho = (level * len(s) - below) / at if at else 0.0
    return float(t), float(min(max(rho, 0.0), 1.0))


def _simulate_codebook(instance, sampler, encoders: EncoderSpec, n, trials, seed, rates, mu_c) -> SimResult:
    cb = encoders.codebook
    K = instance.K
    if rates is None or len(cb.rates_hat) != K:
        raise InvalidRates("codebook mode needs bin rates and codebook rates for every sensor")
    for k in range(K):
        if cb.rates_hat[k] < rates[k] - 1e-12:
            raise InvalidRates(f"bin rate of sensor {k + 1} exceeds its codebook rate")
    sizes = [math.ceil(math.exp(n * r)) for r in cb.rates_hat]
    bins = [math.ceil(math.exp(n * r)) for r in rates]
    if max(sizes) > 2**16:
        raise InvalidRates("codebooks larger than 65536 words are not supported")
    shape = instance.shape
    chans = []
    for k in range(K):
        if cb.test_channels:
            W = np.asarray(cb.test_channels[k], float)
        else:
            m = shape[k + 2]
            W = (1 - cb.smoothing) * np.eye(m) + cb.smoothing / m
        chans.append(W)
    # P_{U_k} and reference pmf over (U_1..U_K, X, Y0)
    factors_xy0, conds = instance.factors()
    ref = factors_xy0
    for k, W in enumerate(chans):
        pu = np.einsum("xay,yu->xau", conds[k], W)
        ref = ref[..., None] * pu.reshape(pu.shape[:2] + (1,) * k + (pu.shape[2],))
    ref = np.moveaxis(ref, (0, 1), (-2, -1))  # (U1..UK, X, Y0)
    ref_flat = ref.ravel()
    rng_cb = _chunk_rng(cb.seed, 0, 7)
    books, bin_of, pu_marg = [], [], []
    for k, W in enumerate(chans):
        p_y = instance.P.sum(axis=tuple(i for i in range(instance.P.ndim) if i != k + 2))
        pu = p_y @ W
        pu_marg.append(pu)
        cu = np.cumsum(pu)
        books.append(np.minimum(np.searchsorted(cu, rng_cb.random((sizes[k], n)) * cu[-1], side="right"), len(pu) - 1))
        bin_of.append(rng_cb.integers(0, bins[k], sizes[k]))
    mu = mu_c / math.sqrt(n)
    logW = [np.log(np.maximum(W, 1e-300)) for W in chans]
    logpu = [np.log(np.maximum(p, 1e-300)) for p in pu_marg]

    def run(hyp, c, m):
        rng = _chunk_rng(seed, c, hyp)
        letters = sampler.letters(rng, hyp, (m, n))
        comps = np.unravel_index(letters, shape)
        us = []
        for k in range(K):
            y = comps[2 + k]
            # encoder: most likely codeword given y^n, then its bin
            score = logW[k][y[:, None, :], books[k][None, :, :]].sum(axis=2)
            j = np.argmax(score, axis=1)
            bsel = bin_of[k][j]
            # detector: most probable codeword in the received bin
            prior = logpu[k][books[k]].sum(axis=1)
            masked = np.where(bin_of[k][None, :] == bsel[:, None], prior[None, :], -np.inf)
            us.append(books[k][np.argmax(masked, axis=1)])
        idx = np.ravel_multi_index(tuple(us) + (comps[0], comps[1]), ref.shape)
        counts = np.zeros((m, ref_flat.size))
        np.add.at(counts, (np.repeat(np.arange(m), n), idx.ravel()), 1.0)
        t = 0.5 * np.abs(counts / n - ref_flat[None, :]).sum(axis=1)
        return int(np.count_nonzero(t <= mu))

    accepted = [_map_chunks(lambda cm, h=h: run(h, *cm), _chunks(trials)) for h in (0, 1)]
    alpha = 1.0 - accepted[0] / trials
    beta = accepted[1] / trials
    return SimResult(alpha, beta, confidence_radius(alpha, trials), confidence_radius(beta, trials), trials, seed, n, "codebook-typicality", mu)
