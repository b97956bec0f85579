import numpy as np
import pytest
from hypothesis import given, strategies as st

from mecoffload.config import NetworkConfig
from mecoffload.ratemodel import (ContractError, ControlDecision, DomainError, energy_mec, energy_user,
                                  evaluate, local_rate, mec_rate, offload_rate)


def decision(alpha, p_l, p_o, p_c, assignment, M):
    K = len(alpha)
    pc = np.zeros((M, K))
    for k, (m, v) in enumerate(zip(assignment, p_c)):
        pc[m, k] = v
    return ControlDecision(np.asarray(alpha, float), np.asarray(p_l, float), np.asarray(p_o, float),
                           pc, np.asarray(assignment))


def test_offload_rate_examples():
    assert offload_rate(3.0, 1.0, 1e6, 1.0) == pytest.approx(2e6)
    assert offload_rate(0.0, 1.0, 1e6, 1.0) == 0.0
    assert offload_rate(1.0, 2.0, 1e6, 1.0) > offload_rate(1.0, 1.0, 1e6, 1.0)


def test_offload_rate_tiny_snr_keeps_precision():
    assert offload_rate(1e-30, 1e-5, 1e6, 4e-15) > 0


def test_rates_reject_negative():
    with pytest.raises(DomainError):
        offload_rate(-1.0, 1.0, 1e6, 1.0)
    with pytest.raises(DomainError):
        local_rate(-1.0, 1e-27, 300)
    with pytest.raises(DomainError):
        mec_rate(np.array([-1.0]), 1e-27, 120)


def test_cpu_rates():
    assert local_rate(1e-27, 1e-27, 300) == pytest.approx(1 / 300)
    assert mec_rate(1e-27, 1e-27, 120) == pytest.approx(1 / 120)
    assert local_rate(0.0, 1e-27, 300) == 0.0
    assert local_rate(8.0, 1.0, 1.0) == pytest.approx(2 * local_rate(1.0, 1.0, 1.0))
    assert mec_rate(2.0, 1.0, 1.0) > mec_rate(1.0, 1.0, 1.0)


def test_array_path_matches_scalar():
    p = np.array([0.0, 0.5, 2.0])
    assert np.allclose(offload_rate(p, 1e-5, 1e6, 4e-15), [offload_rate(x, 1e-5, 1e6, 4e-15) for x in p])


def test_evaluate_local_example():
    cfg = NetworkConfig(M=1, K=1, R_cap=1e9)
    d = decision([1.0], [1e-27], [0.0], [0.0], [0], 1)
    r = evaluate(d, [1.0], [[1e-5]], cfg)
    assert r.t_k[0] == pytest.approx(300.0)
    assert r.t_o[0] == 0 and r.t_c[0] == 0


def test_evaluate_zero_rate_caps(cfg):
    d = decision([0.0, 0.0], [0, 0], [0.0, 0.0], [1.0, 1.0], [0, 1], 2)
    r = evaluate(d, [100.0, 100.0], np.full((2, 2), 1e-5), cfg)
    assert r.slot_delay == cfg.R_cap
    assert (r.t_o == cfg.R_cap).all()
    assert r.reward == -cfg.R_cap


def test_evaluate_symmetric_users(cfg):
    d = decision([0.3, 0.3], [0.1, 0.1], [0.2, 0.2], [5.0, 5.0], [0, 1], 2)
    r = evaluate(d, [2000.0, 2000.0], np.full((2, 2), 1e-5), cfg)
    assert r.t_k[0] == r.t_k[1]


def test_evaluate_contract_violations(cfg):
    d = decision([0.5, 0.5], [1, 1], [1, 1], [1, 1], [0, 1], 2)
    d.p_c[1, 0] = 1.0
    with pytest.raises(ContractError):
        evaluate(d, [1.0, 1.0], np.ones((2, 2)), cfg)
    d2 = decision([1.5, 0.5], [1, 1], [1, 1], [1, 1], [0, 1], 2)
    with pytest.raises(ContractError):
        evaluate(d2, [1.0, 1.0], np.ones((2, 2)), cfg)


def test_energy_examples(cfg):
    d = decision([1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0, 1], 2)
    r = evaluate(d, [0.0, 0.0], np.ones((2, 2)), cfg)
    assert energy_user(d, 0, r) == 0.0
    assert energy_mec(d, 0, r) == energy_mec(d, 1, r) == 0.0


def test_energy_closed_form_local():
    cfg = NetworkConfig(M=1, K=1, R_cap=1e9)
    d = decision([1.0], [1e-27], [0.0], [0.0], [0], 1)
    r = evaluate(d, [300.0], [[1e-5]], cfg)
    assert r.t_l[0] == pytest.approx(9e4)
    assert energy_user(d, 0, r) == pytest.approx(1e-27 * 9e4)


@given(st.floats(1e-3, 1e3), st.floats(0.0, 0.99), st.floats(1.0, 1e5))
def test_energy_rate_identity(p_c, alpha, C):
    cfg = NetworkConfig(M=1, K=1)
    d = decision([alpha], [0.0 if alpha == 0 else 1.0], [1.0], [p_c], [0], 1)
    r = evaluate(d, [C], [[1e-5]], cfg)
    expect = p_c ** (2 / 3) * cfg.kappa_m ** (1 / 3) * (1 - alpha) * C * cfg.D_m
    assert energy_mec(d, 0, r) == pytest.approx(expect, rel=1e-10)


@given(st.floats(0.0, 1.0), st.floats(0.0, 2.0), st.floats(1e-6, 2.0), st.floats(1e-3, 10.0),
       st.floats(1.0, 1e4), st.floats(1.01, 3.0))
def test_evaluate_monotone(alpha, p_l, p_o, p_c, C, factor):
    cfg = NetworkConfig(M=1, K=1)
    g = [[1e-5]]
    base = evaluate(decision([alpha], [p_l], [p_o], [p_c], [0], 1), [C], g, cfg)
    bigger = evaluate(decision([alpha], [p_l], [p_o], [p_c], [0], 1), [C * factor], g, cfg)
    assert bigger.slot_delay >= base.slot_delay
    more_o = evaluate(decision([alpha], [p_l], [p_o * factor], [p_c], [0], 1), [C], g, cfg)
    assert more_o.t_o[0] <= base.t_o[0]
    more_c = evaluate(decision([alpha], [p_l], [p_o], [p_c * factor], [0], 1), [C], g, cfg)
    assert more_c.t_c[0] <= base.t_c[0]
    assert -cfg.R_cap <= base.reward <= 0
    assert base.t_k[0] == max(base.t_l[0], base.t_o[0] + base.t_c[0])
