"""Domain types and validated construction.

Gaussian network models (source X, side information Y0 = H0 X + Z0, sensors
Yk = Hk X + Zk with noises Markov through Z0) and discrete hypothesis-testing
instances (joint pmfs P, Q over X x Y0 x Y1 x ... x YK).

All logarithms are natural; every information quantity is in nats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DimensionMismatch,
    InvalidOmega,
    MarginalMismatch,
    MarkovStructureViolated,
    MarkovViolated,
    MassNotOne,
    NotPositiveDefinite,
    ValidationError,
)

PSD_TOL = 1e-9
FACTOR_TOL = 1e-10

REAL = "real"
COMPLEX = "complex"
CONVENTIONS = (REAL, COMPLEX)


# ---------------------------------------------------------------------------
# subsets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class SubsetMask:
    """Subset S of sensors {1..K}, stored as a bitmask (bit k-1 <-> sensor k)."""

    bits: int
    K: int

    def __post_init__(self):
        if self.K < 0 or self.bits < 0 or self.bits >= (1 << self.K):
            raise ValidationError(f"bitmask {self.bits} out of range for K={self.K}")

    @classmethod
    def from_members(cls, members: Sequence[int], K: int) -> "SubsetMask":
        bits = 0
        for k in members:
            if not 1 <= k <= K:
                raise ValidationError(f"sensor index {k} outside 1..{K}")
            bits |= 1 << (k - 1)
        return cls(bits, K)

    @classmethod
    def from_string(cls, s: str) -> "SubsetMask":
        """Parse the bit-string form produced by ``str()`` (sensor 1 first)."""
        if any(c not in "01" for c in s):
            raise ValidationError(f"bad subset string {s!r}")
        return cls.from_members([i + 1 for i, c in enumerate(s) if c == "1"], len(s))

    @classmethod
    def full(cls, K: int) -> "SubsetMask":
        return cls((1 << K) - 1, K)

    @classmethod
    def empty(cls, K: int) -> "SubsetMask":
        return cls(0, K)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(k for k in range(1, self.K + 1) if self.bits >> (k - 1) & 1)

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(k for k in range(1, self.K + 1) if not self.bits >> (k - 1) & 1)

    @property
    def bar(self) -> tuple[int, ...]:
        """{0} union S^c, the index set seen by the detector for this subset."""
        return (0,) + self.complement

    def __contains__(self, k: int) -> bool:
        return 1 <= k <= self.K and bool(self.bits >> (k - 1) & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __str__(self) -> str:
        return "".join("1" if k in self else "0" for k in range(1, self.K + 1))


def all_subsets(K: int) -> Iterator[SubsetMask]:
    """Every subset of {1..K} in ascending bitmask order."""
    for bits in range(1 << K):
        yield SubsetMask(bits, K)


def subset_matrix(K: int) -> np.ndarray:
    """(2^K, K) 0/1 matrix; row b is the indicator of the subset with bitmask b."""
    b = np.arange(1 << K)[:, None]
    return ((b >> np.arange(K)[None, :]) & 1).astype(float)


# ---------------------------------------------------------------------------
# matrix helpers
# ---------------------------------------------------------------------------


def as_matrix(a, rows: int | None = None, cols: int | None = None, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=complex if np.iscomplexobj(a) else float))
    if np.asarray(a).size == 0:
        m = np.zeros((rows or 0, cols or 0))
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows or cols is not None and m.shape[1] != cols:
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected ({rows}, {cols})")
    return m


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def check_positive_definite(m: np.ndarray, name: str) -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {m.shape}")
    if m.size == 0:
        return m
    if not np.allclose(m, m.conj().T, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise NotPositiveDefinite(name)
    eig = np.linalg.eigvalsh(hermitian_part(m))
    if eig[0] <= PSD_TOL * max(abs(eig[-1]), 1e-300):
        raise NotPositiveDefinite(name, float(eig[0]))
    return hermitian_part(m)


def logdet(m: np.ndarray) -> float:
    """log|det m| for a Hermitian positive definite (or real-spectrum) matrix."""
    if m.size == 0:
        return 0.0
    sign, val = np.linalg.slogdet(m)
    if np.real(sign) <= 0:
        return -math.inf
    return float(val)


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    dtype = np.result_type(*blocks) if blocks else float
    out = np.zeros((rows, cols), dtype=dtype)
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def gaussian_entropy(cov, convention: str = REAL) -> float:
    """Differential entropy of a zero-mean Gaussian vector, in nats.

    ``complex`` (circularly symmetric): log|(pi e) cov|;
    ``real``: 0.5 log|(2 pi e) cov|.
    """
    c = check_positive_definite(as_matrix(cov, name="covariance"), "covariance")
    n = c.shape[0]
    if convention == COMPLEX:
        return n * math.log(math.pi * math.e) + logdet(c)
    if convention == REAL:
        return 0.5 * (n * math.log(2 * math.pi * math.e) + logdet(c))
    raise ValidationError(f"unknown convention {convention!r}")


# ---------------------------------------------------------------------------
# Gaussian network model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SensorBlock:
    h: np.ndarray  # n_k x n_x
    sigma_k0: np.ndarray  # n_k x n_0, cross-covariance of Z_k with Z_0
    sigma_k: np.ndarray  # n_k x n_k, covariance of Z_k given Z_0

    @property
    def dim(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianNetworkModel:
    convention: str
    sigma_x: np.ndarray
    h0: np.ndarray
    sigma_0: np.ndarray
    sensors: tuple[SensorBlock, ...]
    noise_cov: np.ndarray = field(repr=False)

    @property
    def n_x(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def n_0(self) -> int:
        return self.h0.shape[0]

    @property
    def K(self) -> int:
        return len(self.sensors)

    @property
    def dims(self) -> tuple[int, ...]:
        """(n_0, n_1, ..., n_K)."""
        return (self.n_0,) + tuple(s.dim for s in self.sensors)

    def _slices(self) -> list[slice]:
        out, start = [], 0
        for d in self.dims:
            out.append(slice(start, start + d))
            start += d
        return out

    def stacked_h(self, indices: Sequence[int]) -> np.ndarray:
        """Vertical concatenation of H_i, i in ``indices`` (0 = side information)."""
        parts = [self.h0 if i == 0 else self.sensors[i - 1].h for i in indices]
        parts = [p for p in parts if p.shape[0]]
        if not parts:
            return np.zeros((0, self.n_x))
        return np.vstack(parts)

    def noise_block(self, indices: Sequence[int]) -> np.ndarray:
        """Covariance of (Z_i)_{i in indices}, extracted from the full noise covariance."""
        sl = self._slices()
        idx = np.concatenate([np.arange(sl[i].start, sl[i].stop) for i in indices]) if indices else np.zeros(0, int)
        return self.noise_cov[np.ix_(idx, idx)]

    def sigma_k(self, k: int) -> np.ndarray:
        return self.sensors[k - 1].sigma_k

    def scalar_parameters(self) -> tuple[float, list[float]]:
        """(sigma_X^2, [sigma_k^2]) for a scalar model without side information."""
        if self.n_x != 1 or self.n_0 != 0 or any(s.dim != 1 for s in self.sensors):
            raise DimensionMismatch("model is not a scalar model without side information")
        if any(abs(s.h[0, 0] - 1.0) > 1e-15 for s in self.sensors):
            raise DimensionMismatch("scalar parameters require unit channel gains")
        return float(np.real(self.sigma_x[0, 0])), [float(np.real(s.sigma_k[0, 0])) for s in self.sensors]


def _assemble_noise(sigma_0: np.ndarray, sensors: Sequence[SensorBlock]) -> np.ndarray:
    n0 = sigma_0.shape[0]
    inv0 = np.linalg.inv(sigma_0) if n0 else np.zeros((0, 0))
    blocks = [[None] * (len(sensors) + 1) for _ in range(len(sensors) + 1)]
    blocks[0][0] = sigma_0
    for j, sj in enumerate(sensors, start=1):
        blocks[j][0] = sj.sigma_k0
        blocks[0][j] = sj.sigma_k0.conj().T
        for k, sk in enumerate(sensors, start=1):
            cross = sj.sigma_k0 @ inv0 @ sk.sigma_k0.conj().T
            blocks[j][k] = cross + sj.sigma_k if j == k else cross
    return np.block(blocks) if blocks[0][0].size or sensors else sigma_0


def _build_model(convention, sigma_x, h0, sigma_0, sensors) -> GaussianNetworkModel:
    noise = _assemble_noise(sigma_0, sensors)
    noise = hermitian_part(noise)
    check_positive_definite(noise, "noise_cov")
    return GaussianNetworkModel(convention, sigma_x, h0, sigma_0, tuple(sensors), noise)


def validate_gaussian_model(raw: dict) -> GaussianNetworkModel:
    """Build a model from its JSON-style description.

    Keys: ``convention`` ('real' | 'complex'), ``sigma_x``, ``h0`` (may be empty
    or absent), ``sigma_0`` (required when h0 has rows), ``sensors``: list of
    {``h``, ``sigma_k0`` (optional when n_0 = 0), ``sigma_k``}.
    """
    convention = raw.get("convention", COMPLEX)
    if convention not in CONVENTIONS:
        raise ValidationError(f"unknown convention {convention!r}")
    sigma_x = as_matrix(raw["sigma_x"], name="sigma_x")
    n_x = sigma_x.shape[0]
    sigma_x = check_positive_definite(sigma_x, "sigma_x")
    h0_raw = raw.get("h0", [])
    h0 = as_matrix(h0_raw, cols=n_x, name="h0") if np.asarray(h0_raw).size else np.zeros((0, n_x))
    n_0 = h0.shape[0]
    if n_0:
        if "sigma_0" not in raw:
            raise DimensionMismatch("sigma_0 is required when h0 is non-empty")
        sigma_0 = check_positive_definite(as_matrix(raw["sigma_0"], n_0, n_0, "sigma_0"), "sigma_0")
    else:
        sigma_0 = np.zeros((0, 0))
    sensors = []
    raw_sensors = raw.get("sensors", [])
    if not raw_sensors:
        raise DimensionMismatch("at least one sensor is required")
    for k, s in enumerate(raw_sensors, start=1):
        h = as_matrix(s["h"], cols=n_x, name=f"h{k}")
        n_k = h.shape[0]
        sk = check_positive_definite(as_matrix(s["sigma_k"], n_k, n_k, f"sigma_{k}"), f"sigma_{k}")
        cross_raw = s.get("sigma_k0", [])
        if np.asarray(cross_raw).size:
            cross = as_matrix(cross_raw, n_k, n_0, f"sigma_{k}0")
        elif n_0:
            cross = np.zeros((n_k, n_0))
        else:
            cross = np.zeros((n_k, 0))
        sensors.append(SensorBlock(h, cross, sk))
    return _build_model(convention, sigma_x, h0, sigma_0, sensors)


def model_from_full_covariance(
    convention: str,
    sigma_x,
    h0,
    hs: Sequence,
    noise_cov,
) -> GaussianNetworkModel:
    """Build a model from a full noise covariance of (Z0, Z1..ZK).

    The off-diagonal sensor blocks must equal Sigma_j0 Sigma_0^-1 Sigma_0k, i.e.
    the sensor noises are independent given Z0.
    """
    sigma_x = check_positive_definite(as_matrix(sigma_x, name="sigma_x"), "sigma_x")
    n_x = sigma_x.shape[0]
    h0 = as_matrix(h0, cols=n_x, name="h0") if np.asarray(h0).size else np.zeros((0, n_x))
    hs = [as_matrix(h, cols=n_x, name=f"h{k}") for k, h in enumerate(hs, start=1)]
    dims = [h0.shape[0]] + [h.shape[0] for h in hs]
    noise = check_positive_definite(as_matrix(noise_cov, sum(dims), sum(dims), "noise_cov"), "noise_cov")
    edges = np.cumsum([0] + dims)
    blk = lambda i, j: noise[edges[i] : edges[i + 1], edges[j] : edges[j + 1]]
    sigma_0 = blk(0, 0)
    inv0 = np.linalg.inv(sigma_0) if dims[0] else np.zeros((0, 0))
    sensors = []
    for k, h in enumerate(hs, start=1):
        cross = blk(k, 0)
        sensors.append(SensorBlock(h, cross, blk(k, k) - cross @ inv0 @ cross.conj().T))
    scale = max(1.0, float(np.abs(noise).max()))
    for j in range(1, len(hs) + 1):
        for k in range(j + 1, len(hs) + 1):
            implied = blk(j, 0) @ inv0 @ blk(k, 0).conj().T
            if np.abs(blk(j, k) - implied).max() > 1e-10 * scale:
                raise MarkovStructureViolated(
                    f"noise block ({j},{k}) is not Sigma_{j}0 Sigma_0^-1 Sigma_0{k}; "
                    "sensor noises must be independent given Z0"
                )
    for k, s in enumerate(sensors, start=1):
        check_positive_definite(s.sigma_k, f"sigma_{k}")
    return _build_model(convention, sigma_x, h0, sigma_0, sensors)


def scalar_model(sigma_x2: float, sigmas2: Sequence[float], convention: str = COMPLEX) -> GaussianNetworkModel:
    """Yk = X + Zk with independent noises and no side information."""
    return validate_gaussian_model(
        {
            "convention": convention,
            "sigma_x": [[sigma_x2]],
            "sensors": [{"h": [[1.0]], "sigma_k": [[s]]} for s in sigmas2],
        }
    )


@dataclass(frozen=True, eq=False)
class OmegaSet:
    """Per-sensor matrices with 0 <= Omega_k <= Sigma_k^-1 (Loewner order)."""

    omegas: tuple[np.ndarray, ...]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.omegas[k - 1]

    def __len__(self) -> int:
        return len(self.omegas)


def validate_omegas(model: GaussianNetworkModel, omegas: Sequence) -> OmegaSet:
    if len(omegas) != model.K:
        raise InvalidOmega(f"expected {model.K} Omega matrices, got {len(omegas)}")
    out = []
    for k, om in enumerate(omegas, start=1):
        n_k = model.sensors[k - 1].dim
        try:
            om = as_matrix(om, n_k, n_k, f"omega_{k}")
        except DimensionMismatch as e:
            raise InvalidOmega(str(e)) from None
        if not np.allclose(om, om.conj().T, atol=1e-12 * max(1.0, np.abs(om).max())):
            raise InvalidOmega(f"omega_{k} is not Hermitian")
        om = hermitian_part(om)
        upper = np.linalg.inv(model.sigma_k(k)) - om
        scale = max(1.0, float(np.abs(np.linalg.eigvalsh(np.linalg.inv(model.sigma_k(k)))).max()))
        if np.linalg.eigvalsh(om)[0] < -PSD_TOL * scale:
            raise InvalidOmega(f"omega_{k} is not positive semidefinite")
        if np.linalg.eigvalsh(hermitian_part(upper))[0] < -PSD_TOL * scale:
            raise InvalidOmega(f"omega_{k} exceeds sigma_{k}^-1")
        out.append(om)
    return OmegaSet(tuple(out))


@dataclass(frozen=True)
class RateExponentPoint:
    rates: tuple[float, ...]
    exponent: float

    def __post_init__(self):
        if any(r < 0 for r in self.rates) or self.exponent < 0:
            raise ValidationError("rates and exponent must be non-negative")


# ---------------------------------------------------------------------------
# discrete instances
# ---------------------------------------------------------------------------


def _marginal(p: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    drop = tuple(i for i in range(p.ndim) if i not in keep)
    return p.sum(axis=drop, keepdims=True)


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, a / np.where(b > 0, b, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class DiscreteHTInstance:
    """Joint pmfs over axes (X, Y0, Y1, ..., YK).

    A trivial Y0 is an axis of length 1.
    """

    P: np.ndarray
    Q: np.ndarray
    labels: tuple[tuple[str, ...], ...] = ()

    @property
    def K(self) -> int:
        return self.P.ndim - 2

    @property
    def shape(self) -> tuple[int, ...]:
        return self.P.shape

    @property
    def p_xy0(self) -> np.ndarray:
        return self.P.sum(axis=tuple(range(2, self.P.ndim)))

    def p_sensor_given_xy0(self, k: int) -> np.ndarray:
        """P_{Yk | X, Y0} as an array [x, y0, yk]."""
        keep = (0, 1, k + 1)
        joint = _marginal(self.P, keep).reshape(self.P.shape[0], self.P.shape[1], self.P.shape[k + 1])
        return _safe_div(joint, joint.sum(axis=2, keepdims=True))

    def factors(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Canonical decomposition (P_{X,Y0}, [P_{Yk|X,Y0}])."""
        return self.p_xy0, [self.p_sensor_given_xy0(k) for k in range(1, self.K + 1)]


def compose_factors(p_xy0: np.ndarray, conditionals: Sequence[np.ndarray]) -> np.ndarray:
    """P_{X,Y0} prod_k P_{Yk|X,Y0} as a dense tensor (X, Y0, Y1, ..., YK)."""
    p_xy0 = np.asarray(p_xy0, dtype=float)
    K = len(conditionals)
    nx, ny0 = p_xy0.shape
    p = p_xy0.reshape(nx, ny0, *([1] * K))
    for k, c in enumerate(conditionals):
        c = np.asarray(c, dtype=float)
        shape = [nx, ny0] + [1] * K
        shape[2 + k] = c.shape[2]
        p = p * c.reshape(shape)
    return p


def conditionally_independent_alternative(P: np.ndarray) -> np.ndarray:
    """Q = P_{Y0} P_{X|Y0} P_{Y1..YK|Y0}: the alternative with P's marginals."""
    p_xy0 = _marginal(P, (0, 1))
    p_y0yk = _marginal(P, tuple(range(1, P.ndim)))
    p_y0 = _marginal(P, (1,))
    return _safe_div(p_xy0 * p_y0yk, p_y0)


def instance_from_factors(p_xy0, conditionals, labels=()) -> DiscreteHTInstance:
    P = compose_factors(np.asarray(p_xy0, float), [np.asarray(c, float) for c in conditionals])
    return validate_dm_instance(P, conditionally_independent_alternative(P), labels)


def validate_dm_instance(P, Q, labels=(), check_marginals: bool = True) -> DiscreteHTInstance:
    """Verify an (X, Y0, Y1..YK) instance.

    Checks masses, the Markov structure of P (sensors independent given
    (X, Y0)), the factorization of Q through Y0 and, unless
    ``check_marginals`` is False, the matched (X,Y0) and (Y0,Y1..YK) marginals.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise DimensionMismatch(f"P has shape {P.shape} but Q has shape {Q.shape}")
    if P.ndim < 3:
        raise DimensionMismatch("instances need axes (X, Y0, Y1, ...); use a length-1 Y0 axis when absent")
    for name, m in (("P", P), ("Q", Q)):
        if (m < -FACTOR_TOL).any():
            raise MassNotOne(f"{name} has negative entries")
        if abs(m.sum() - 1.0) > FACTOR_TOL * max(1, m.size) ** 0.5 + 1e-12:
            raise MassNotOne(f"{name} sums to {m.sum():.15g}")
    P = np.clip(P, 0.0, None)
    Q = np.clip(Q, 0.0, None)
    K = P.ndim - 2

    # Markov: pairwise first so the error names the offending pair
    p_xy0 = _marginal(P, (0, 1))
    for j, k in itertools.combinations(range(1, K + 1), 2):
        pj = _marginal(P, (0, 1, j + 1))
        pk = _marginal(P, (0, 1, k + 1))
        pjk = _marginal(P, (0, 1, j + 1, k + 1))
        resid = float(np.abs(pjk - _safe_div(pj * pk, p_xy0)).max())
        if resid > FACTOR_TOL:
            raise MarkovViolated("{%d,%d}" % (j, k), resid)
    prod = p_xy0
    for k in range(1, K + 1):
        prod = prod * _safe_div(_marginal(P, (0, 1, k + 1)), p_xy0)
    resid = float(np.abs(P - prod).max())
    if resid > FACTOR_TOL:
        raise MarkovViolated("{%s}" % ",".join(map(str, range(1, K + 1))), resid)

    resid = float(np.abs(Q - conditionally_independent_alternative(Q)).max())
    if resid > FACTOR_TOL:
        raise ValidationError(f"Q does not factor as Q_Y0 Q_X|Y0 Q_Y|Y0 (residual {resid:.3e})")

    if check_marginals:
        d = float(np.abs(_marginal(P, (0, 1)) - _marginal(Q, (0, 1))).max())
        if d > FACTOR_TOL:
            raise MarginalMismatch("(X,Y0)", d)
        keep = tuple(range(1, P.ndim))
        d = float(np.abs(_marginal(P, keep) - _marginal(Q, keep)).max())
        if d > FACTOR_TOL:
            raise MarginalMismatch("(Y0,Y1..YK)", d)
    labels = tuple(tuple(map(str, l)) for l in labels)
    if labels and (len(labels) != P.ndim or any(len(l) != n for l, n in zip(labels, P.shape))):
        raise DimensionMismatch("labels do not match the pmf shape")
    return DiscreteHTInstance(P, Q, labels)


def bsc_instance(crossover: float, p_x1: float = 0.5) -> DiscreteHTInstance:
    """X ~ Bern(p_x1), no side information, Y = X xor Bern(crossover)."""
    p_xy0 = np.array([[1 - p_x1], [p_x1]])
    ch = np.array([[1 - crossover, crossover], [crossover, 1 - crossover]])[:, None, :]
    return instance_from_factors(p_xy0, [ch])


def discretize_scalar_gaussian(
    sigma_x2: float,
    sigmas2: Sequence[float],
    x_edges: Sequence[float],
    y_edges: Sequence[Sequence[float]] | Sequence[float],
    n_nodes: int = 400,
) -> DiscreteHTInstance:
    """Quantize X and Yk = X + Zk (real, independent noises) into bins.

    Edges are interior cut points; the outer bins extend to +-infinity. Within
    each X cell the integral over x is done by Gauss-Legendre in the variable
    u = Phi(x / sigma_x), which keeps the infinite outer cells bounded.
    """
    x_edges = np.asarray(x_edges, float)
    if np.ndim(y_edges[0]) == 0:
        y_edges = [y_edges] * len(sigmas2)
    y_edges = [np.asarray(e, float) for e in y_edges]
    sx = math.sqrt(sigma_x2)
    cuts = np.concatenate([[-np.inf], x_edges, [np.inf]])
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    # integrate over u = Phi(x / sx) in each X cell, which is bounded
    p_xy0 = []
    conds = [[] for _ in sigmas2]
    for a, b in zip(cuts[:-1], cuts[1:]):
        ua, ub = stats.norm.cdf(a / sx), stats.norm.cdf(b / sx)
        u = 0.5 * (ub - ua) * nodes + 0.5 * (ub + ua)
        w = 0.5 * (ub - ua) * weights
        x = sx * stats.norm.ppf(u)
        mass = w.sum()
        p_xy0.append(mass)
        for k, (s2, e) in enumerate(zip(sigmas2, y_edges)):
            yc = np.concatenate([[-np.inf], e, [np.inf]])
            cdf = stats.norm.cdf((yc[None, :] - x[:, None]) / math.sqrt(s2))
            conds[k].append((w[:, None] * np.diff(cdf, axis=1)).sum(0) / mass)
    p_xy0 = np.array(p_xy0)[:, None]
    p_xy0 /= p_xy0.sum()
    conditionals = []
    for c in conds:
        c = np.array(c)
        c /= c.sum(axis=1, keepdims=True)
        conditionals.append(c[:, None, :])
    return instance_from_factors(p_xy0, conditionals)


@dataclass(frozen=True, eq=False)
class TestChannelFamily:
    """Auxiliaries (U_1..U_K, Q): time-sharing pmf and P_{Uk|Yk,Q}[y, q, u]."""

    __test__ = False  # not a pytest class

    p_q: np.ndarray
    channels: tuple[np.ndarray, ...]

    @property
    def u_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.channels)


def validate_test_channels(p_q, channels, instance: DiscreteHTInstance | None = None) -> TestChannelFamily:
    p_q = np.atleast_1d(np.asarray(p_q, float))
    if (p_q < 0).any() or abs(p_q.sum() - 1) > FACTOR_TOL:
        raise MassNotOne("time-sharing pmf must be a probability vector")
    out = []
    for k, c in enumerate(channels, start=1):
        c = np.asarray(c, float)
        if c.ndim == 2:
            c = np.repeat(c[:, None, :], len(p_q), axis=1)
        if c.ndim != 3 or c.shape[1] != len(p_q):
            raise DimensionMismatch(f"channel {k} must have shape (|Y{k}|, |Q|, |U{k}|)")
        if (c < 0).any() or np.abs(c.sum(axis=2) - 1).max() > FACTOR_TOL:
            raise MassNotOne(f"channel {k} rows must sum to 1")
        if instance is not None and c.shape[0] != instance.shape[k + 1]:
            raise DimensionMismatch(f"channel {k} input alphabet {c.shape[0]} != |Y{k}| = {instance.shape[k + 1]}")
        out.append(c)
    if instance is not None and len(out) != instance.K:
        raise DimensionMismatch(f"need {instance.K} channels, got {len(out)}")
    return TestChannelFamily(p_q, tuple(out))
