"""Vector and scalar Gaussian rate-exponent regions.

For a Gaussian network model and per-sensor matrices 0 <= Omega_k <= Sigma_k^-1,
each subset S of sensors gives the constraint

    E <= sum_{k in S} (R_k + log|I - Omega_k Sigma_k|)
         - log|I + Sigma_x H0^H Sigma_0^-1 H0|
         + log|I + Sigma_x H_Sbar^H Sigma_nSbar^-1 (I - Lambda_Sbar Sigma_nSbar^-1) H_Sbar|

with Sbar = {0} u S^c (complex circular convention, natural log). The scalar
specialisation (no side information, Yk = X + Zk, independent noises) replaces
Omega_k by gamma_k in [0, 1/sigma_k^2].

The region itself is a union over Omega; the optimisers here maximise the
exponent min_S f_S for fixed rates. Every f_S is concave in Omega, so the
max-min is a concave program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    ConventionMismatch,
    GammaOutOfBox,
    InvalidOmega,
    KNotOne,
    OmegaOnBoundary,
    StructureUnsupported,
    ValidationError,
)
from .model import (
    COMPLEX,
    GaussianNetworkModel,
    OmegaSet,
    SubsetMask,
    all_subsets,
    block_diag,
    logdet,
    subset_matrix,
    validate_omegas,
)

SCHEMA_VERSION = "1"
CONVERGENCE_TOL = 1e-7
N_STARTS = 5

# Distinguished value for an Omega_k = 0 test channel (infinite noise).
UNINFORMATIVE = "uninformative"


def _as_subset(subset, K: int) -> SubsetMask:
    if isinstance(subset, SubsetMask):
        if subset.K != K:
            raise ValidationError(f"subset defined for K={subset.K}, model has K={K}")
        return subset
    if isinstance(subset, str):
        return SubsetMask.from_string(subset)
    return SubsetMask.from_members(list(subset), K)


def _rates(rates, K: int) -> np.ndarray:
    r = np.atleast_1d(np.asarray(rates, dtype=float))
    if r.shape != (K,):
        raise ValidationError(f"expected {K} rates, got {r.shape[0]}")
    if (r < 0).any() or not np.isfinite(r).all():
        raise ValidationError("rates must be finite and non-negative")
    return r


def _require_complex(model: GaussianNetworkModel):
    if model.convention != COMPLEX:
        raise ConventionMismatch(
            "the Gaussian region formulas use the complex circular convention (log|.|, pi e); "
            f"model is {model.convention!r}"
        )


def _coerce_omegas(model, omegas) -> OmegaSet:
    return omegas if isinstance(omegas, OmegaSet) else validate_omegas(model, omegas)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def lambda_bar(model: GaussianNetworkModel, omegas: OmegaSet, subset: SubsetMask) -> np.ndarray:
    """Block-diagonal [0_{n0}, diag(Sigma_k - Sigma_k Omega_k Sigma_k : k in S^c)]."""
    blocks = [np.zeros((model.n_0, model.n_0))]
    for k in subset.complement:
        s = model.sigma_k(k)
        blocks.append(s - s @ omegas[k] @ s)
    return block_diag(blocks)


def fisher_closed_form(model: GaussianNetworkModel, omegas, subset) -> np.ndarray:
    """Fisher information of X given (Y0, U_{S^c}) for Gaussian test channels.

    J = Sigma_x^-1 + H^H Sigma_n^-1 (I - Lambda Sigma_n^-1) H over the index set {0} u S^c.
    """
    omegas = _coerce_omegas(model, omegas)
    subset = _as_subset(subset, model.K)
    idx = subset.bar
    h = model.stacked_h(idx)
    sn_inv = np.linalg.inv(model.noise_block(idx)) if h.shape[0] else np.zeros((0, 0))
    lam = lambda_bar(model, omegas, subset)
    inner = np.eye(h.shape[0]) - lam @ sn_inv
    j = np.linalg.inv(model.sigma_x) + h.conj().T @ sn_inv @ inner @ h
    return 0.5 * (j + j.conj().T)


def _side_info_term(model: GaussianNetworkModel) -> float:
    if model.n_0 == 0:
        return 0.0
    m = np.eye(model.n_x) + model.sigma_x @ model.h0.conj().T @ np.linalg.inv(model.sigma_0) @ model.h0
    return logdet(m)


def evaluate_vg_bound(model: GaussianNetworkModel, omegas, rates, subset) -> float:
    """Right-hand side of the subset-S exponent constraint, in nats."""
    _require_complex(model)
    omegas = _coerce_omegas(model, omegas)
    subset = _as_subset(subset, model.K)
    r = _rates(rates, model.K)
    total = 0.0
    for k in subset.members:
        total += r[k - 1] + logdet(np.eye(model.sensors[k - 1].dim) - omegas[k] @ model.sigma_k(k))
    j = fisher_closed_form(model, omegas, subset)
    total += logdet(model.sigma_x @ j) - _side_info_term(model)
    return total


def qbt_test_channel_covariance(model: GaussianNetworkModel, omegas) -> list:
    """Covariances Gamma_k of the Gaussian test channels U_k = Y_k + V_k.

    Gamma_k = Omega_k^-1 - Sigma_k, which makes mmse(Y_k | X, Y0, U_k) equal
    Sigma_k - Sigma_k Omega_k Sigma_k. Omega_k = 0 yields ``UNINFORMATIVE``;
    Omega_k = Sigma_k^-1 yields the zero matrix (noiseless channel).
    """
    omegas = _coerce_omegas(model, omegas)
    out = []
    for k in range(1, model.K + 1):
        om = omegas[k]
        scale = max(1.0, float(np.abs(om).max()))
        eig = np.linalg.eigvalsh(om)
        if eig[-1] <= 1e-14 * scale:
            out.append(UNINFORMATIVE)
            continue
        if eig[0] <= 1e-12 * eig[-1]:
            raise OmegaOnBoundary(f"omega_{k} is singular but non-zero; the test channel has infinite noise along part of its span")
        g = np.linalg.inv(om) - model.sigma_k(k)
        g = 0.5 * (g + g.conj().T)
        # Omega_k = Sigma_k^-1 up to rounding
        if np.abs(g).max() <= 1e-12 * max(1.0, float(np.abs(model.sigma_k(k)).max())):
            g = np.zeros_like(g)
        out.append(g)
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class VgBoundReport:
    per_subset: dict[str, float]
    binding: tuple[str, ...]
    exponent: float
    raw_min: float
    omegas: OmegaSet | None = None
    gammas: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "exponent": self.exponent,
            "raw_min": self.raw_min,
            "binding": list(self.binding),
            "per_subset": dict(self.per_subset),
        }
        if self.omegas is not None:
            out["omegas"] = [np.real_if_close(o).tolist() for o in self.omegas.omegas]
        if self.gammas is not None:
            out["gammas"] = [float(g) for g in self.gammas]
        out.update(self.meta)
        return out


def _report(values: dict[str, float], tol: float = 1e-12, **kw) -> VgBoundReport:
    raw = min(values.values())
    binding = tuple(s for s, v in values.items() if v <= raw + tol * max(1.0, abs(raw)))
    return VgBoundReport(values, binding, max(raw, 0.0), raw, **kw)


def vg_bound_report(model: GaussianNetworkModel, omegas, rates) -> VgBoundReport:
    omegas = _coerce_omegas(model, omegas)
    values = {str(s): evaluate_vg_bound(model, omegas, rates, s) for s in all_subsets(model.K)}
    return _report(values, omegas=omegas)


# ---------------------------------------------------------------------------
# scalar (independent noises, no side information)
# ---------------------------------------------------------------------------


def _check_gammas(gammas, sigmas2) -> np.ndarray:
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    s = np.asarray(sigmas2, dtype=float)
    if g.shape != s.shape:
        raise GammaOutOfBox(f"expected {s.shape[0]} gammas, got {g.shape[0]}")
    if (g < -1e-12).any() or (g * s > 1 + 1e-12).any():
        raise GammaOutOfBox("each gamma_k must lie in [0, 1/sigma_k^2]")
    return np.clip(g, 0.0, 1.0 / s)


def evaluate_scalar_bound(sigma_x2: float, sigmas2, gammas, rates, subset) -> float:
    """sum_{S} R_k + ln(1 + sigma_X^2 sum_{S^c} gamma_k) + sum_{S} ln(1 - gamma_k sigma_k^2)."""
    s = np.asarray(sigmas2, dtype=float)
    g = _check_gammas(gammas, s)
    r = _rates(rates, len(s))
    subset = _as_subset(subset, len(s))
    total = math.log1p(sigma_x2 * sum(g[k - 1] for k in subset.complement))
    for k in subset.members:
        total += r[k - 1] + math.log1p(-g[k - 1] * s[k - 1]) if g[k - 1] * s[k - 1] < 1 else -math.inf
    return total


class _ScalarProblem:
    """All 2^K subset bounds of the scalar region, vectorised."""

    def __init__(self, sigma_x2: float, sigmas2, rates):
        self.sx = float(sigma_x2)
        self.s = np.asarray(sigmas2, dtype=float)
        self.r = _rates(rates, len(self.s))
        self.M = subset_matrix(len(self.s))
        self.Mc = 1.0 - self.M
        self.upper = (1.0 / self.s) * (1 - 1e-14)
        self.base = self.M @ self.r

    def values(self, g: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.base + np.log1p(self.sx * (self.Mc @ g)) + self.M @ np.log1p(-g * self.s)

    def grads(self, g: np.ndarray) -> np.ndarray:
        a = self.sx / (1.0 + self.sx * (self.Mc @ g))
        return a[:, None] * self.Mc - self.M * (self.s / (1.0 - g * self.s))[None, :]


# ---------------------------------------------------------------------------
# concave max-min solver
# ---------------------------------------------------------------------------


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iters: int = 200) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= 1e-15 * max(1.0, abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(f(lo), lo), (f(hi), hi), (fc, c), (fd, d)]
    best = max(cands, key=lambda t: t[0])
    return best[1], best[0]


def maximize_min_concave(
    values: Callable[[np.ndarray], np.ndarray],
    grads: Callable[[np.ndarray], np.ndarray],
    upper: np.ndarray,
    seed: int = 0,
    n_starts: int = N_STARTS,
    iters: int = 400,
    tol: float = CONVERGENCE_TOL,
) -> tuple[np.ndarray, float, dict]:
    """Maximise min_i values(x)_i over the box [0, upper].

    Projected subgradient ascent (gradient of a binding constraint, step
    c / sqrt(t)) from ``n_starts`` seeded starts, then cyclic coordinate
    golden-section refinement, then an SLSQP polish of the epigraph form
    max t s.t. values(x) >= t. The best feasible point seen is returned.
    """
    upper = np.asarray(upper, dtype=float)
    d = upper.size
    obj = lambda x: float(np.min(values(x)))
    best_x = np.zeros(d)
    best_v = obj(best_x)
    info = {"starts": n_starts, "subgradient_best": -math.inf}

    def consider(x):
        nonlocal best_x, best_v
        x = np.minimum(np.maximum(x, 0.0), upper)
        v = obj(x)
        if v > best_v:
            best_x, best_v = x.copy(), v
        return v

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A1D]))
    starts = [0.5 * upper] + [rng.uniform(0.0, 1.0, d) * upper for _ in range(max(n_starts - 1, 0))]
    c = 0.25 * float(upper.max())
    # in one dimension the golden-section pass below is already exact
    for x in starts if d > 1 else starts[:1]:
        consider(x)
        last_gain, start_best = 0, -math.inf
        for t in range(1, iters + 1 if d > 1 else 1):
            vals = values(x)
            i = int(np.argmin(vals))
            g = grads(x)[i]
            norm = math.sqrt(float(g @ g))
            if not math.isfinite(norm) or norm == 0.0:
                break
            x = np.minimum(np.maximum(x + (c / math.sqrt(t)) * g / norm, 0.0), upper)
            v = consider(x)
            if v > start_best + 1e-12:
                start_best, last_gain = v, t
            elif t - last_gain > 80:
                break
    info["subgradient_best"] = best_v

    # coordinate refinement; min of concave functions is concave along each axis
    x = best_x.copy()
    for _sweep in range(100):
        before = best_v
        for i in range(d):
            def f1(t, i=i):
                y = x.copy()
                y[i] = t
                return obj(y)

            t, _ = _golden_max(f1, 0.0, float(upper[i]))
            x[i] = t
            consider(x)
        x = best_x.copy()
        if best_v - before < tol * 1e-3:
            break
    info["coordinate_best"] = best_v

    if d > 1:
        z0 = np.concatenate([best_x, [best_v]])
        cons = {
            "type": "ineq",
            "fun": lambda z: values(z[:-1]) - z[-1],
            "jac": lambda z: np.hstack([grads(z[:-1]), -np.ones((len(values(z[:-1])), 1))]),
        }
        bounds = [(0.0, float(u)) for u in upper] + [(None, None)]
        with np.errstate(all="ignore"):
            res = optimize.minimize(
                lambda z: -z[-1],
                z0,
                jac=lambda z: np.concatenate([np.zeros(d), [-1.0]]),
                bounds=bounds,
                constraints=[cons],
                method="SLSQP",
                options={"maxiter": 500, "ftol": 1e-15},
            )
        if np.all(np.isfinite(res.x)):
            consider(res.x[:-1])
        # one more coordinate pass from the polished point
        x = best_x.copy()
        for i in range(d):
            def f1(t, i=i):
                y = x.copy()
                y[i] = t
                return obj(y)

            t, _ = _golden_max(f1, 0.0, float(upper[i]))
            x[i] = t
            consider(x)
    info["final"] = best_v
    return best_x, best_v, info


@dataclass
class ScalarOptimum:
    exponent: float
    gammas: np.ndarray
    raw_min: float
    binding: tuple[str, ...]


def optimize_scalar_exponent(sigma_x2: float, sigmas2, rates, seed: int = 0) -> ScalarOptimum:
    """Largest exponent achievable at the given rates in the scalar region.

    Returns E* clamped at 0 and an argmax gamma vector. Limited to K <= 12.
    """
    s = np.asarray(sigmas2, dtype=float)
    if len(s) > 12:
        raise ValidationError("scalar optimiser enumerates 2^K subsets; K <= 12")
    if sigma_x2 <= 0 or (s <= 0).any():
        raise ValidationError("variances must be positive")
    prob = _ScalarProblem(sigma_x2, s, rates)
    g, v, _ = maximize_min_concave(prob.values, prob.grads, prob.upper, seed=seed)
    if v <= 0.0:
        g = np.zeros_like(s)
        v = float(np.min(prob.values(g)))
    vals = prob.values(g)
    raw = float(vals.min())
    K = len(s)
    binding = tuple(str(SubsetMask(b, K)) for b in range(1 << K) if vals[b] <= raw + 1e-9)
    return ScalarOptimum(max(raw, 0.0), g, raw, binding)


def scalar_bound_report(sigma_x2: float, sigmas2, gammas, rates) -> VgBoundReport:
    s = np.asarray(sigmas2, dtype=float)
    g = _check_gammas(gammas, s)
    values = {str(S): evaluate_scalar_bound(sigma_x2, s, g, rates, S) for S in all_subsets(len(s))}
    return _report(values, gammas=g)


def centralized_exponent(sigma_x2: float, sigmas2) -> float:
    """I(Y1..YK; X) for the scalar model, complex convention: ln(1 + sigma_X^2 sum 1/sigma_k^2)."""
    return math.log1p(sigma_x2 * float(np.sum(1.0 / np.asarray(sigmas2, dtype=float))))


# ---------------------------------------------------------------------------
# vector optimisation over diagonal Omega
# ---------------------------------------------------------------------------


class _DiagonalProblem:
    def __init__(self, model: GaussianNetworkModel, rates):
        _require_complex(model)
        self.model = model
        self.r = _rates(rates, model.K)
        for k, s in enumerate(model.sensors, start=1):
            off = s.sigma_k - np.diag(np.diag(s.sigma_k))
            if np.abs(off).max(initial=0.0) > 1e-12 * float(np.abs(s.sigma_k).max()):
                raise StructureUnsupported(f"diagonal structure requires diagonal sigma_{k}")
        self.sizes = [s.dim for s in model.sensors]
        self.offsets = np.cumsum([0] + self.sizes)
        self.upper = np.concatenate([1.0 / np.real(np.diag(s.sigma_k)) for s in model.sensors]) * (1 - 1e-14)
        self.subsets = list(all_subsets(model.K))
        self.side = _side_info_term(model)
        self.sx_inv = np.linalg.inv(model.sigma_x)
        # per-subset constant pieces
        self.pre = []
        for S in self.subsets:
            idx = S.bar
            h = model.stacked_h(idx)
            sn_inv = np.linalg.inv(model.noise_block(idx)) if h.shape[0] else np.zeros((0, 0))
            B = sn_inv @ h
            base = self.sx_inv + h.conj().T @ B
            row_off = np.cumsum([0] + [model.dims[i] for i in idx])
            blocks = {k: B[row_off[j] : row_off[j + 1]] for j, k in enumerate(idx) if k != 0}
            self.pre.append((base, blocks))

    def omegas(self, w: np.ndarray) -> OmegaSet:
        return OmegaSet(tuple(np.diag(w[self.offsets[k] : self.offsets[k + 1]]).astype(float) for k in range(self.model.K)))

    def _parts(self, w):
        sig = [np.real(np.diag(s.sigma_k)) for s in self.model.sensors]
        ws = [w[self.offsets[k] : self.offsets[k + 1]] for k in range(self.model.K)]
        return sig, ws

    def values(self, w: np.ndarray) -> np.ndarray:
        sig, ws = self._parts(w)
        with np.errstate(divide="ignore"):
            own = [float(np.sum(np.log1p(-ws[k] * sig[k]))) for k in range(self.model.K)]
        out = np.empty(len(self.subsets))
        for i, (S, (base, blocks)) in enumerate(zip(self.subsets, self.pre)):
            j = base.copy()
            for k, Bk in blocks.items():
                lam = sig[k - 1] - sig[k - 1] ** 2 * ws[k - 1]
                j -= Bk.conj().T @ (lam[:, None] * Bk)
            v = logdet(self.model.sigma_x @ j) - self.side
            v += sum(self.r[k - 1] + own[k - 1] for k in S.members)
            out[i] = v
        return out

    def grads(self, w: np.ndarray) -> np.ndarray:
        sig, ws = self._parts(w)
        out = np.zeros((len(self.subsets), w.size))
        for i, (S, (base, blocks)) in enumerate(zip(self.subsets, self.pre)):
            j = base.copy()
            for k, Bk in blocks.items():
                lam = sig[k - 1] - sig[k - 1] ** 2 * ws[k - 1]
                j -= Bk.conj().T @ (lam[:, None] * Bk)
            j_inv = np.linalg.inv(j)
            for k, Bk in blocks.items():
                # d logdet J / d w_{k,i} = sigma_i^2 (Bk J^-1 Bk^H)_{ii}
                q = np.real(np.einsum("ij,jk,ik->i", Bk, j_inv, Bk.conj()))
                out[i, self.offsets[k - 1] : self.offsets[k]] += sig[k - 1] ** 2 * q
            for k in S.members:
                out[i, self.offsets[k - 1] : self.offsets[k]] -= sig[k - 1] / (1.0 - ws[k - 1] * sig[k - 1])
        return out


def optimize_vg_exponent(
    model: GaussianNetworkModel,
    rates,
    structure: str = "diagonal",
    omegas=None,
    seed: int = 0,
) -> VgBoundReport:
    """Maximise the exponent over diagonal Omega_k, or evaluate at given Omega_k.

    ``structure='diagonal'`` needs every Sigma_k diagonal;
    ``structure='given-omegas'`` returns the report for ``omegas``.
    """
    _require_complex(model)
    if structure == "given-omegas":
        if omegas is None:
            raise ValidationError("given-omegas structure needs omegas")
        return vg_bound_report(model, omegas, rates)
    if structure != "diagonal":
        raise StructureUnsupported(f"unknown structure {structure!r}; use 'diagonal' or 'given-omegas'")
    prob = _DiagonalProblem(model, rates)
    w, v, info = maximize_min_concave(prob.values, prob.grads, prob.upper, seed=seed)
    if v <= 0.0:
        w = np.zeros_like(w)
    rep = vg_bound_report(model, prob.omegas(w), rates)
    rep.meta["solver"] = {k: float(x) for k, x in info.items()}
    return rep


def one_encoder_region(model: GaussianNetworkModel, R1: float, structure: str = "diagonal") -> float:
    """Best exponent of the one-encoder problem at rate R1.

    ``structure='diagonal'`` optimises over diagonal Omega_1 (needs diagonal
    Sigma_1); ``structure='scaled'`` searches Omega_1 = t Sigma_1^-1, t in [0, 1],
    for a general Sigma_1 (a lower bound on the optimum).
    """
    if model.K != 1:
        raise KNotOne(f"one-encoder region needs K = 1, model has K = {model.K}")
    _require_complex(model)
    if structure == "scaled":
        s_inv = np.linalg.inv(model.sigma_k(1))

        def f(t):
            om = OmegaSet((t * s_inv,))
            return min(evaluate_vg_bound(model, om, [R1], b) for b in ("0", "1"))

        _, v = _golden_max(f, 0.0, 1.0 - 1e-14)
        return max(v, 0.0)
    return optimize_vg_exponent(model, [R1], "diagonal").exponent


def region_curve(sigma_x2: float, sigmas2, rate_grid: Sequence[Sequence[float]], seed: int = 0) -> list[tuple[list[float], float]]:
    """E*(R) sampled on a user grid of rate vectors (scalar model)."""
    return [(list(map(float, r)), optimize_scalar_exponent(sigma_x2, sigmas2, r, seed=seed).exponent) for r in rate_grid]
