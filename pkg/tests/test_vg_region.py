import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rateex.errors import ConventionMismatch, GammaOutOfBox, InvalidOmega, KNotOne, OmegaOnBoundary, StructureUnsupported
from rateex.model import REAL, OmegaSet, SubsetMask, all_subsets, scalar_model, validate_gaussian_model
from rateex.vg_region import (
    UNINFORMATIVE,
    centralized_exponent,
    evaluate_scalar_bound,
    evaluate_vg_bound,
    fisher_closed_form,
    one_encoder_region,
    optimize_scalar_exponent,
    optimize_vg_exponent,
    qbt_test_channel_covariance,
    region_curve,
    scalar_bound_report,
    vg_bound_report,
)


def _herm_pd(r, n, shift=0.3):
    a = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    return a @ a.conj().T / n + shift * np.eye(n)


def random_model(seed):
    r = np.random.default_rng(seed)
    n_x = int(r.integers(1, 4))
    n_0 = int(r.integers(0, 3))
    K = int(r.integers(1, 4))
    raw = {"convention": "complex", "sigma_x": _herm_pd(r, n_x).tolist()}
    cplx = lambda m: [[complex(v) for v in row] for row in m]
    raw["sigma_x"] = cplx(_herm_pd(r, n_x))
    if n_0:
        raw["h0"] = cplx(r.normal(size=(n_0, n_x)) + 1j * r.normal(size=(n_0, n_x)))
        raw["sigma_0"] = cplx(_herm_pd(r, n_0))
    sensors = []
    for _ in range(K):
        n_k = int(r.integers(1, 3))
        s = {"h": cplx(r.normal(size=(n_k, n_x)) + 1j * r.normal(size=(n_k, n_x))), "sigma_k": cplx(_herm_pd(r, n_k))}
        if n_0:
            s["sigma_k0"] = cplx(0.3 * (r.normal(size=(n_k, n_0)) + 1j * r.normal(size=(n_k, n_0))))
        sensors.append(s)
    raw["sensors"] = sensors
    model = validate_gaussian_model(raw)
    omegas = []
    for k in range(1, K + 1):
        s = model.sigma_k(k)
        w, v = np.linalg.eigh(s)
        s_mhalf = v @ np.diag(w**-0.5) @ v.conj().T
        q, _ = np.linalg.qr(r.normal(size=(len(w), len(w))) + 1j * r.normal(size=(len(w), len(w))))
        b = q @ np.diag(r.uniform(0.05, 0.95, len(w))) @ q.conj().T
        omegas.append(s_mhalf @ b @ s_mhalf)
    rates = r.uniform(0, 2, K)
    return model, OmegaSet(tuple(omegas)), rates


def _cond_cov(C, a, b):
    """Covariance of block a given block b (index lists) of a joint covariance C."""
    if not b:
        return C[np.ix_(a, a)]
    Cab = C[np.ix_(a, b)]
    return C[np.ix_(a, a)] - Cab @ np.linalg.solve(C[np.ix_(b, b)], Cab.conj().T)


def _ld(m):
    return float(np.log(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


def oracle_bound(model, omegas, rates, S):
    """Subset bound from Gaussian test channels U_k = Y_k + V_k via joint covariances."""
    K, n_x = model.K, model.n_x
    gammas = [np.linalg.inv(omegas[k]) - model.sigma_k(k) for k in range(1, K + 1)]
    dims = model.dims
    n_z = sum(dims)
    n_v = sum(dims[1:])
    # latent vector [X, Z0..ZK, V1..VK]
    n_lat = n_x + n_z + n_v
    cov_lat = np.zeros((n_lat, n_lat), complex)
    cov_lat[:n_x, :n_x] = model.sigma_x
    cov_lat[n_x : n_x + n_z, n_x : n_x + n_z] = model.noise_cov
    off = n_x + n_z
    for g in gammas:
        d = g.shape[0]
        cov_lat[off : off + d, off : off + d] = g
        off += d
    # observed [X, Y0, Y1..YK, U1..UK]
    rows = [np.hstack([np.eye(n_x), np.zeros((n_x, n_z + n_v))])]
    z_off = np.cumsum([0] + list(dims))
    for i in range(K + 1):
        h = model.h0 if i == 0 else model.sensors[i - 1].h
        m = np.zeros((dims[i], n_lat), complex)
        m[:, :n_x] = h
        m[:, n_x + z_off[i] : n_x + z_off[i + 1]] = np.eye(dims[i])
        rows.append(m)
    v_off = np.cumsum([0] + list(dims[1:]))
    for k in range(1, K + 1):
        m = rows[1 + k].copy()
        m[:, n_x + n_z + v_off[k - 1] : n_x + n_z + v_off[k]] = np.eye(dims[k])
        rows.append(m)
    A = np.vstack(rows)
    C = A @ cov_lat @ A.conj().T
    starts = np.cumsum([0, n_x] + list(dims) + list(dims[1:]))
    idx = lambda j: list(range(starts[j], starts[j + 1]))
    X, Y0 = idx(0), idx(1)
    Yk = lambda k: idx(1 + k)
    Uk = lambda k: idx(1 + K + k)
    uc = sum((Uk(k) for k in S.complement), [])
    total = _ld(_cond_cov(C, X, Y0)) - _ld(_cond_cov(C, X, Y0 + uc))
    for k in S.members:
        pen = _ld(_cond_cov(C, Uk(k), X + Y0)) - _ld(gammas[k - 1])
        total += rates[k - 1] - pen
    return total


@pytest.mark.parametrize("seed", range(25))
def test_vector_bound_matches_covariance_oracle(seed):
    model, omegas, rates = random_model(seed)
    for S in all_subsets(model.K):
        assert evaluate_vg_bound(model, omegas, rates, S) == pytest.approx(oracle_bound(model, omegas, rates, S), abs=1e-9)


def test_fisher_closed_form_is_inverse_posterior_covariance():
    # K=1, no side information, Omega at the upper corner: U = Y, J = Sigma_x^-1 + H^H Sigma^-1 H
    model, _, _ = random_model(3)
    om = OmegaSet(tuple(np.linalg.inv(model.sigma_k(k)) for k in range(1, model.K + 1)))
    J = fisher_closed_form(model, om, SubsetMask.empty(model.K))
    idx = (0,) + tuple(range(1, model.K + 1))
    H = model.stacked_h(idx)
    Sn = model.noise_block(idx)
    expected = np.linalg.inv(model.sigma_x) + H.conj().T @ np.linalg.solve(Sn, H)
    assert np.allclose(J, expected, atol=1e-10)


def corollary_formula(sx2, s2, g, R, S):
    """Scalar closed form, complex convention."""
    val = sum(R[k - 1] + math.log(1 - g[k - 1] * s2[k - 1]) for k in S.members)
    return val + math.log(1 + sx2 * sum(g[k - 1] for k in S.complement))


@given(st.integers(0, 2**31 - 1))
def test_scalar_closed_form_against_vector_evaluation(seed):
    r = np.random.default_rng(seed)
    K = int(r.integers(1, 5))
    sx2 = float(r.uniform(0.1, 5))
    s2 = r.uniform(0.1, 5, K)
    g = r.uniform(0, 1, K) / s2 * 0.999
    R = r.uniform(0, 2, K)
    model = scalar_model(sx2, s2)
    om = OmegaSet(tuple(np.array([[x]]) for x in g))
    for S in all_subsets(K):
        a = evaluate_scalar_bound(sx2, s2, g, R, S)
        assert a == pytest.approx(evaluate_vg_bound(model, om, R, S), abs=1e-12)
        assert a == pytest.approx(corollary_formula(sx2, s2, g, R, S), abs=1e-12)


@pytest.mark.parametrize("R", [0.1, 0.5, 1.0, 2.0, 3.0])
def test_k1_crossing(R):
    opt = optimize_scalar_exponent(1.0, [1.0], [R])
    g = (math.exp(R) - 1) / (math.exp(R) + 1)
    assert opt.exponent == pytest.approx(math.log1p(g), abs=1e-9)
    assert opt.gammas[0] == pytest.approx(g, abs=1e-6)
    assert set(opt.binding) == {"0", "1"}


def test_k2_optimizer_against_brute_force_grid():
    sx2, s2, R = 1.5, np.array([1.0, 2.0]), np.array([0.4, 0.7])
    n = 600
    g1 = np.linspace(0, 1 / s2[0], n)[:-1]
    g2 = np.linspace(0, 1 / s2[1], n)[:-1]
    G1, G2 = np.meshgrid(g1, g2, indexing="ij")
    f = np.minimum.reduce(
        [
            np.log1p(sx2 * (G1 + G2)),
            R[0] + np.log1p(-G1 * s2[0]) + np.log1p(sx2 * G2),
            R[1] + np.log1p(-G2 * s2[1]) + np.log1p(sx2 * G1),
            R.sum() + np.log1p(-G1 * s2[0]) + np.log1p(-G2 * s2[1]),
        ]
    )
    grid_best = f.max()
    opt = optimize_scalar_exponent(sx2, s2, R)
    assert opt.exponent >= grid_best - 1e-12
    assert opt.exponent <= grid_best + 5e-3


def test_large_rates_reach_centralized_cap():
    sx2, s2 = 2.0, [1.0, 0.5, 4.0]
    opt = optimize_scalar_exponent(sx2, s2, [50.0] * 3)
    assert opt.exponent == pytest.approx(centralized_exponent(sx2, s2), abs=1e-8)
    assert centralized_exponent(sx2, s2) == pytest.approx(math.log(1 + sx2 * (1 + 2 + 0.25)))


def test_zero_rates_give_zero_exponent():
    opt = optimize_scalar_exponent(1.0, [1.0, 2.0], [0.0, 0.0])
    assert opt.exponent == pytest.approx(0.0, abs=1e-12)
    assert np.all(opt.gammas == 0)


@given(st.integers(0, 2**31 - 1))
def test_exponent_nondecreasing_in_rates(seed):
    r = np.random.default_rng(seed)
    K = int(r.integers(1, 4))
    s2 = r.uniform(0.2, 3, K)
    R = r.uniform(0, 1.5, K)
    R2 = R + r.uniform(0, 0.5, K) * (r.uniform(size=K) < 0.7)
    e1 = optimize_scalar_exponent(1.0, s2, R).exponent
    e2 = optimize_scalar_exponent(1.0, s2, R2).exponent
    assert e2 >= e1 - 1e-9
    assert e2 <= centralized_exponent(1.0, s2) + 1e-9


def test_vector_optimizer_agrees_with_scalar():
    rep = optimize_vg_exponent(scalar_model(1.0, [1.0, 2.0]), [0.5, 0.8])
    assert rep.exponent == pytest.approx(optimize_scalar_exponent(1.0, [1.0, 2.0], [0.5, 0.8]).exponent, abs=1e-8)
    given_rep = optimize_vg_exponent(scalar_model(1.0, [1.0, 2.0]), [0.5, 0.8], "given-omegas", omegas=rep.omegas)
    assert given_rep.exponent == pytest.approx(rep.exponent, abs=1e-12)
    with pytest.raises(StructureUnsupported):
        optimize_vg_exponent(scalar_model(1.0, [1.0]), [1.0], "full")


def test_report_keys_and_binding():
    rep = scalar_bound_report(1.0, [1.0, 1.0], [0.3, 0.4], [0.5, 0.5])
    assert set(rep.per_subset) == {"00", "10", "01", "11"}
    assert rep.raw_min == min(rep.per_subset.values())
    assert all(rep.per_subset[b] == pytest.approx(rep.raw_min) for b in rep.binding)
    j = rep.to_json()
    assert j["schema_version"] == "1" and j["gammas"] == [0.3, 0.4]


def test_real_models_are_rejected():
    m = scalar_model(1.0, [1.0], convention=REAL)
    with pytest.raises(ConventionMismatch):
        evaluate_vg_bound(m, [[[0.5]]], [1.0], "0")


def test_invalid_inputs():
    m = scalar_model(1.0, [1.0])
    with pytest.raises(InvalidOmega):
        evaluate_vg_bound(m, [[[1.5]]], [1.0], "0")
    with pytest.raises(GammaOutOfBox):
        evaluate_scalar_bound(1.0, [1.0], [1.5], [1.0], "0")
    with pytest.raises(KNotOne):
        one_encoder_region(scalar_model(1.0, [1.0, 1.0]), 1.0)


def test_test_channel_covariances():
    m = scalar_model(1.0, [2.0, 1.0, 1.0])
    out = qbt_test_channel_covariance(m, [[[0.25]], [[0.0]], [[1.0]]])
    assert out[0] == pytest.approx(np.array([[2.0]]))  # 1/0.25 - 2
    assert out[1] == UNINFORMATIVE
    assert np.all(out[2] == 0)
    raw = {"sigma_x": [[1.0, 0.0], [0.0, 1.0]], "sensors": [{"h": [[1.0, 0.0], [0.0, 1.0]], "sigma_k": [[1.0, 0.0], [0.0, 1.0]]}]}
    with pytest.raises(OmegaOnBoundary):
        qbt_test_channel_covariance(validate_gaussian_model(raw), [[[0.5, 0.0], [0.0, 0.0]]])


def test_one_encoder_structures():
    raw = {"sigma_x": [[1.0, 0.2], [0.2, 1.0]], "sensors": [{"h": [[1.0, 0.0], [0.0, 1.0]], "sigma_k": [[1.0, 0.0], [0.0, 2.0]]}]}
    m = validate_gaussian_model(raw)
    diag = one_encoder_region(m, 0.8)
    scaled = one_encoder_region(m, 0.8, "scaled")
    assert 0 < scaled <= diag + 1e-9
    assert one_encoder_region(scalar_model(1.0, [1.0]), 1.0) == pytest.approx(0.3798854930417225, abs=1e-9)


def test_region_curve_shape():
    pts = region_curve(1.0, [1.0, 1.0], [[0.1, 0.1], [0.5, 0.5], [1.0, 1.0]])
    vals = [e for _, e in pts]
    assert vals == sorted(vals)


def test_vg_report_from_given_omegas():
    model, omegas, rates = random_model(11)
    rep = vg_bound_report(model, omegas, rates)
    assert len(rep.per_subset) == 1 << model.K
    assert rep.exponent == max(0.0, min(rep.per_subset.values()))
