"""Discrete-alphabet rate-exponent region.

A test channel family (Q, P_{U1|Y1,Q}, ..., P_{UK|YK,Q}) certifies, for every
sensor subset S,

    E <= I(U_{S^c}; X | Y0, Q) + sum_{k in S} (R_k - I(Y_k; U_k | X, Y0, Q)).

Everything here is exact summation over dense pmf tensors. Grid search over
uniform simplex meshes gives inner approximations of the region.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import entr

from .errors import (
    AlphabetMismatch,
    AuxIndependenceViolated,
    BudgetExceeded,
    ExponentExceedsEntropy,
    MassNotOne,
    OverlappingSets,
    UnknownVariable,
    ValidationError,
)
from .model import (
    FACTOR_TOL,
    DiscreteHTInstance,
    SubsetMask,
    TestChannelFamily,
    all_subsets,
    validate_test_channels,
)

DEFAULT_BUDGET = 10**7
SCHEMA_VERSION = "1"
_CHUNK_ELEMENTS = 4_000_000


# ---------------------------------------------------------------------------
# tensors and information measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointPmfTensor:
    """Dense pmf with one labelled axis per variable."""

    p: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "labels", tuple(self.labels))
        if p.ndim != len(self.labels):
            raise ValidationError(f"{p.ndim} axes but {len(self.labels)} labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("axis labels must be unique")
        if (p < -FACTOR_TOL).any():
            raise MassNotOne("pmf has negative entries")
        if abs(p.sum() - 1.0) > FACTOR_TOL * max(1.0, math.sqrt(p.size)):
            raise MassNotOne(f"pmf sums to {p.sum():.15g}")

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        out = []
        for n in names:
            if n not in self.labels:
                raise UnknownVariable(f"variable {n!r} not in tensor (have {', '.join(self.labels)})")
            out.append(self.labels.index(n))
        return tuple(out)

    def entropy(self, names: Iterable[str]) -> float:
        return _entropy(self.p, self.axes(names))

    def marginal(self, names: Sequence[str]) -> "JointPmfTensor":
        ax = self.axes(names)
        drop = tuple(i for i in range(self.p.ndim) if i not in ax)
        m = self.p.sum(axis=drop)
        # reorder kept axes to the requested order
        kept = sorted(ax)
        m = np.moveaxis(m, [kept.index(a) for a in ax], range(len(ax)))
        return JointPmfTensor(m, tuple(names))


def _entropy(p: np.ndarray, keep: Sequence[int], batch: bool = False) -> np.ndarray | float:
    """H of the marginal on ``keep``; with ``batch`` axis 0 is a batch index."""
    off = 1 if batch else 0
    keep = {k + off for k in keep}
    drop = tuple(i for i in range(off, p.ndim) if i not in keep)
    m = p.sum(axis=drop) if drop else p
    h = entr(m).reshape(m.shape[0], -1).sum(axis=1) if batch else float(entr(m).sum())
    return h


def _as_names(v) -> tuple[str, ...]:
    if isinstance(v, str):
        return (v,)
    return tuple(v)


def conditional_mutual_information(tensor: JointPmfTensor, A, B, C=()) -> float:
    """I(A; B | C) in nats by exact summation; zero-mass cells contribute 0."""
    A, B, C = _as_names(A), _as_names(B), _as_names(C)
    for n in A + B + C:
        tensor.axes([n])
    if set(A) & set(B) or set(A) & set(C) or set(B) & set(C):
        raise OverlappingSets("A, B and C must be disjoint")
    if not A or not B:
        raise ValidationError("A and B must be non-empty")
    h = tensor.entropy
    val = h(A + C) + h(B + C) - h(A + B + C) - (h(C) if C else 0.0)
    return max(val, 0.0) if val > -1e-12 else val


def mutual_information(tensor: JointPmfTensor, A, B) -> float:
    return conditional_mutual_information(tensor, A, B, ())


def instance_tensor(instance: DiscreteHTInstance, which: str = "P") -> JointPmfTensor:
    p = instance.P if which == "P" else instance.Q
    return JointPmfTensor(p, ("X", "Y0") + tuple(f"Y{k}" for k in range(1, instance.K + 1)))


def _source_labels(K: int) -> tuple[str, ...]:
    return ("X", "Y0") + tuple(f"Y{k}" for k in range(1, K + 1))


def build_joint(instance: DiscreteHTInstance, channels: TestChannelFamily) -> JointPmfTensor:
    """Joint pmf over (Q, X, Y0, Y1..YK, U1..UK) under the null hypothesis."""
    K = instance.K
    p = np.einsum("q,...->q...", channels.p_q, instance.P)
    for k, c in enumerate(channels.channels, start=1):
        # c[y, q, u]: broadcast onto axis Y_k and the new trailing U_k axis
        shape = [1] * p.ndim + [c.shape[2]]
        shape[0] = c.shape[1]
        shape[2 + k] = c.shape[0]
        p = p[..., None] * np.moveaxis(c, 1, 0).reshape(shape)
    labels = ("Q",) + _source_labels(K) + tuple(f"U{k}" for k in range(1, K + 1))
    return JointPmfTensor(p, labels)


# ---------------------------------------------------------------------------
# single-letter region bound
# ---------------------------------------------------------------------------


@dataclass
class DmBoundReport:
    per_subset: dict[str, float]
    binding: tuple[str, ...]
    exponent: float
    raw_min: float
    channels: TestChannelFamily | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "exponent": self.exponent,
            "raw_min": self.raw_min,
            "binding": list(self.binding),
            "per_subset": dict(self.per_subset),
        }
        if self.channels is not None:
            out["p_q"] = self.channels.p_q.tolist()
            out["channels"] = [c.tolist() for c in self.channels.channels]
        out.update(self.meta)
        return out


def _check_rates(rates, K: int) -> np.ndarray:
    r = np.atleast_1d(np.asarray(rates, dtype=float))
    if r.shape != (K,) or (r < 0).any() or not np.isfinite(r).all():
        raise ValidationError(f"need {K} finite non-negative rates")
    return r


def _bounds_from_batch(p: np.ndarray, K: int, rates: np.ndarray) -> np.ndarray:
    """Per-subset bound values for a batch of joints (B, Q, X, Y0, Y.., U..)."""
    Q_, X_, Y0_ = 0, 1, 2
    Y = [3 + i for i in range(K)]
    U = [3 + K + i for i in range(K)]
    H = lambda axes: _entropy(p, axes, batch=True)
    h_y0q = H([Y0_, Q_])
    h_xy0q = H([X_, Y0_, Q_])
    penalty = []
    for k in range(K):
        penalty.append(
            H([Y[k], X_, Y0_, Q_]) + H([U[k], X_, Y0_, Q_]) - H([Y[k], U[k], X_, Y0_, Q_]) - h_xy0q
        )
    out = np.empty((p.shape[0], 1 << K))
    for S in all_subsets(K):
        uc = [U[k - 1] for k in S.complement]
        if uc:
            term = H(uc + [Y0_, Q_]) + h_xy0q - H(uc + [X_, Y0_, Q_]) - h_y0q
        else:
            term = np.zeros(p.shape[0])
        for k in S.members:
            term = term + rates[k - 1] - penalty[k - 1]
        out[:, S.bits] = term
    return out


def _binding(values: dict[str, float], raw: float, tol: float = 1e-12) -> tuple[str, ...]:
    return tuple(s for s, v in values.items() if v <= raw + tol * max(1.0, abs(raw)))


def evaluate_theorem1_bound(instance: DiscreteHTInstance, channels: TestChannelFamily, rates) -> DmBoundReport:
    """Per-subset bounds and the clamped exponent for one test channel family."""
    K = instance.K
    if len(channels.channels) != K:
        raise AlphabetMismatch(f"need {K} channels, got {len(channels.channels)}")
    for k, c in enumerate(channels.channels, start=1):
        if c.shape[0] != instance.shape[k + 1]:
            raise AlphabetMismatch(f"channel {k} input alphabet {c.shape[0]} != |Y{k}| = {instance.shape[k + 1]}")
    r = _check_rates(rates, K)
    joint = build_joint(instance, channels).p[None]
    vals = _bounds_from_batch(joint, K, r)[0]
    per = {str(SubsetMask(b, K)): float(vals[b]) for b in range(1 << K)}
    raw = float(vals.min())
    return DmBoundReport(per, _binding(per, raw), max(raw, 0.0), raw, channels)


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------


def simplex_grid(m: int, divisions: int) -> np.ndarray:
    """All pmfs on m atoms with entries in {0, 1/d, ..., 1}, lexicographic order."""
    if m < 1 or divisions < 1:
        raise ValidationError("need m >= 1 and divisions >= 1")
    pts = []
    for bars in itertools.combinations(range(divisions + m - 1), m - 1):
        edges = (-1,) + bars + (divisions + m - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(m)])
    arr = np.array(pts, dtype=float).reshape(-1, m) / divisions
    order = np.lexsort(arr.T[::-1])
    return arr[order]


def grid_size(instance: DiscreteHTInstance, u_sizes: Sequence[int], divisions: int, q_size: int = 1) -> int:
    total = 1
    for k, u in enumerate(u_sizes, start=1):
        total *= math.comb(divisions + u - 1, u - 1) ** (instance.shape[k + 1] * q_size)
    if q_size > 1:
        total *= math.comb(divisions + q_size - 1, q_size - 1)
    return total


@dataclass
class GridSearchResult:
    exponent: float
    channels: TestChannelFamily
    report: DmBoundReport
    evaluations: int
    divisions: int
    u_sizes: tuple[int, ...]
    q_size: int

    def to_json(self) -> dict:
        out = self.report.to_json()
        out.update(
            {
                "evaluations": self.evaluations,
                "divisions": self.divisions,
                "u_sizes": list(self.u_sizes),
                "q_size": self.q_size,
                "inner_approximation": True,
            }
        )
        return out


def grid_search_dm_exponent(
    instance: DiscreteHTInstance,
    rates,
    u_sizes: Sequence[int] | None = None,
    divisions: int = 10,
    budget: int = DEFAULT_BUDGET,
    q_size: int = 1,
) -> GridSearchResult:
    """Best exponent over a uniform simplex mesh of test channels.

    Each row P_{Uk|Yk=y,Q=q} ranges over the mesh with ``divisions`` steps per
    unit. The result is a lower bound on the region's exponent at these
    rates. Ties keep the first channel in enumeration order.
    """
    K = instance.K
    r = _check_rates(rates, K)
    if u_sizes is None:
        u_sizes = [instance.shape[k + 1] + 1 for k in range(1, K + 1)]
    u_sizes = tuple(int(u) for u in u_sizes)
    if len(u_sizes) != K or min(u_sizes) < 1:
        raise ValidationError(f"need {K} positive auxiliary alphabet sizes")
    if q_size < 1:
        raise ValidationError("q_size must be >= 1")
    total = grid_size(instance, u_sizes, divisions, q_size)
    if total > budget:
        raise BudgetExceeded(f"grid has {total} points, budget is {budget}")

    meshes = [simplex_grid(u, divisions) for u in u_sizes]
    q_mesh = simplex_grid(q_size, divisions) if q_size > 1 else np.ones((1, 1))
    # mixed-radix digits: [q pmf] then for each sensor, rows (y, q)
    radix = [len(q_mesh)]
    for k, u in enumerate(u_sizes):
        radix += [len(meshes[k])] * (instance.shape[k + 2] * q_size)
    per_point = q_size * instance.P.size * int(np.prod(u_sizes))
    chunk = max(1, _CHUNK_ELEMENTS // per_point)

    best_v, best_i = -math.inf, 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = np.unravel_index(idx, radix)
        p_q = q_mesh[digits[0]]
        joint = np.einsum("bq,...->bq...", p_q, instance.P)
        d = 1
        for k, u in enumerate(u_sizes):
            ny = instance.shape[k + 2]
            rows = np.stack([meshes[k][digits[d + j]] for j in range(ny * q_size)], axis=1)
            d += ny * q_size
            c = rows.reshape(len(idx), ny, q_size, u)  # [b, y, q, u]
            shape = [len(idx)] + [1] * (joint.ndim - 1) + [u]
            shape[1] = q_size
            shape[4 + k] = ny
            joint = joint[..., None] * np.moveaxis(c, 2, 1).reshape(shape)
        vals = _bounds_from_batch(joint, K, r).min(axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best_v:
            best_v, best_i = float(vals[j]), start + j

    digits = [int(x) for x in np.unravel_index(best_i, radix)]
    p_q = q_mesh[digits[0]]
    chans, d = [], 1
    for k, u in enumerate(u_sizes):
        ny = instance.shape[k + 2]
        rows = np.stack([meshes[k][digits[d + j]] for j in range(ny * q_size)])
        d += ny * q_size
        chans.append(rows.reshape(ny, q_size, u))
    fam = validate_test_channels(p_q, chans, instance)
    rep = evaluate_theorem1_bound(instance, fam, r)
    return GridSearchResult(rep.exponent, fam, rep, total, divisions, u_sizes, q_size)


# ---------------------------------------------------------------------------
# weakened region via a shared auxiliary
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RwAuxiliary:
    """(W, Q) independent of the sources; channels P_{Uk|Yk,W,Q}[y, w, q, u]."""

    p_wq: np.ndarray
    channels: tuple[np.ndarray, ...]

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.p_wq, float))
        object.__setattr__(self, "p_wq", p)
        if (p < 0).any() or abs(p.sum() - 1) > FACTOR_TOL:
            raise MassNotOne("p_wq must be a pmf")
        chans = []
        for k, c in enumerate(self.channels, start=1):
            c = np.asarray(c, float)
            if c.ndim != 4 or c.shape[1:3] != p.shape:
                raise ValidationError(f"channel {k} must have shape (|Y{k}|, |W|, |Q|, |U{k}|)")
            if (c < 0).any() or np.abs(c.sum(axis=3) - 1).max() > FACTOR_TOL:
                raise MassNotOne(f"channel {k} rows must sum to 1")
            chans.append(c)
        object.__setattr__(self, "channels", tuple(chans))

    @classmethod
    def from_joint(cls, p_wqxy0, channels, instance: DiscreteHTInstance) -> "RwAuxiliary":
        """Build from a joint pmf over (W, Q, X, Y0), checking independence of (W, Q) and (X, Y0)."""
        j = np.asarray(p_wqxy0, float)
        p_wq = j.sum(axis=(2, 3))
        p_xy0 = j.sum(axis=(0, 1))
        resid = float(np.abs(j - p_wq[:, :, None, None] * p_xy0[None, None]).max())
        if resid > FACTOR_TOL:
            raise AuxIndependenceViolated(f"(W,Q) is not independent of (X,Y0) (residual {resid:.3e})")
        d = float(np.abs(p_xy0 - instance.p_xy0).max())
        if d > FACTOR_TOL:
            raise AuxIndependenceViolated(f"(X,Y0) marginal differs from the instance (residual {d:.3e})")
        return cls(p_wq, tuple(channels))


def _rw_joint(instance: DiscreteHTInstance, aux: RwAuxiliary) -> JointPmfTensor:
    K = instance.K
    p = np.einsum("wq,...->wq...", aux.p_wq, instance.P)
    for k, c in enumerate(aux.channels, start=1):
        shape = [1] * p.ndim + [c.shape[3]]
        shape[0], shape[1] = c.shape[1], c.shape[2]
        shape[3 + k] = c.shape[0]
        p = p[..., None] * np.moveaxis(c, 0, 2).reshape(shape)
    labels = ("W", "Q") + _source_labels(K) + tuple(f"U{k}" for k in range(1, K + 1))
    return JointPmfTensor(p, labels)


@dataclass
class RwReport:
    exponent: float
    i_full: float
    step_i_slack: dict[str, float]
    chain_residual: dict[str, float]
    rw_slack: dict[str, float]
    final_slack: dict[str, float]

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **self.__dict__}


def rw_weakening_check(instance: DiscreteHTInstance, aux: RwAuxiliary, rates, E: float | None = None) -> RwReport:
    """Numerically trace the reduction of the outer bound (with A = X) to the region.

    For each subset S the report holds:
      step_i_slack   I(U_Sc;X|Y0,W,Q) - I(U_Sc;X|Y0,Q)         (>= 0)
      chain_residual I(U_S;X|U_Sc,Y0,Q) - [I(U_K;X|Y0,Q) - I(U_Sc;X|Y0,Q)]   (= 0)
      rw_slack       sum_S R_k - I(U_S;X|U_Sc,Y0,Q) - sum_S I(U_k;Y_k|X,W,Y0,Q)
      final_slack    sum_S R_k - E + I(U_Sc;X|Y0,W,Q) - sum_S I(U_k;Y_k|X,W,Y0,Q)
    With E <= I(U_K;X|Y0,Q), final_slack >= rw_slack for every S.
    """
    K = instance.K
    if len(aux.channels) != K:
        raise AlphabetMismatch(f"need {K} channels, got {len(aux.channels)}")
    for k, c in enumerate(aux.channels, start=1):
        if c.shape[0] != instance.shape[k + 1]:
            raise AlphabetMismatch(f"channel {k} input alphabet {c.shape[0]} != |Y{k}|")
    r = _check_rates(rates, K)
    t = _rw_joint(instance, aux)
    cmi = lambda A, B, C: conditional_mutual_information(t, A, B, C) if A and B else 0.0
    U = [f"U{k}" for k in range(1, K + 1)]
    i_full = cmi(U, ["X"], ["Y0", "Q"])
    if E is None:
        E = i_full
    elif E > i_full + 1e-12:
        raise ValidationError(f"E = {E} exceeds I(U_K;X|Y0,Q) = {i_full}")
    pen = [cmi([f"U{k}"], [f"Y{k}"], ["X", "W", "Y0", "Q"]) for k in range(1, K + 1)]
    step, chain, rw, final = {}, {}, {}, {}
    for S in all_subsets(K):
        sc = [U[k - 1] for k in S.complement]
        s = [U[k - 1] for k in S.members]
        i_sc = cmi(sc, ["X"], ["Y0", "Q"])
        i_sc_w = cmi(sc, ["X"], ["Y0", "W", "Q"])
        i_s_given = cmi(s, ["X"], sc + ["Y0", "Q"])
        rsum = float(sum(r[k - 1] for k in S.members))
        psum = float(sum(pen[k - 1] for k in S.members))
        key = str(S)
        step[key] = i_sc_w - i_sc
        chain[key] = i_s_given - (i_full - i_sc)
        rw[key] = rsum - i_s_given - psum
        final[key] = rsum - E + i_sc_w - psum
    return RwReport(float(E), i_full, step, chain, rw, final)


def ceo_distortion_equivalent(instance: DiscreteHTInstance, E: float) -> float:
    """Log-loss distortion H(X|Y0) - E matching exponent E."""
    t = instance_tensor(instance)
    h = t.entropy(["X", "Y0"]) - t.entropy(["Y0"])
    if E < 0:
        raise ValidationError("exponent must be non-negative")
    if E > h + 1e-12:
        raise ExponentExceedsEntropy(f"E = {E} exceeds H(X|Y0) = {h}")
    return max(h - E, 0.0)
