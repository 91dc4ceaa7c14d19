import json

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from railyard.circuit import QuantumCircuit, apply_circuit_prefix, basis_state, cnot, pad_with_identities, random_circuit, single
from railyard.dynamics import (EXACT_AVERAGE, MONTE_CARLO, EvolutionError, ProtocolConfig, SystemState,
                               adiabatic_sweep, averaging_kernel, compile_protocol, default_tau_max,
                               evolve, initial_state, run_protocol, site_distribution,
                               time_averaged_expectation, train_distribution)
from railyard.hamiltonian import (FULL_CLOCK, SINGLE_TRAIN, ClockSpace, SparseHermitianOperator, assemble,
                                  build_h3s, build_h_init, zero_operator)
from railyard.layout import build_layout_3local, close_cycle, enumerate_legal_graph
from railyard.verify import embed_legal_basis, history_state


def op(M):
    return SparseHermitianOperator(np.asarray(M, dtype=complex), SINGLE_TRAIN)


def state(v):
    v = np.asarray(v, dtype=complex)
    return SystemState(v / np.linalg.norm(v), 0.0, SINGLE_TRAIN)


def bell_line():
    c = QuantumCircuit(2, (single("H", 0), cnot(0, 1)))
    lay = build_layout_3local(c)
    return c, lay, assemble(build_h3s(c, lay))


def test_tau_zero_identity():
    _, lay, H = bell_line()
    s0 = initial_state(ClockSpace(lay))
    assert np.array_equal(evolve(H, s0, 0.0).amplitudes, s0.amplitudes)


def test_rabi_flop():
    out = evolve(op([[0, 1], [1, 0]]), state([1, 0]), np.pi / 2)
    assert abs(abs(out.amplitudes[1]) - 1) <= 1e-12
    assert out.time == pytest.approx(np.pi / 2)


@pytest.mark.parametrize("dense_max", [4096, 0])
def test_evolve_matches_expm(dense_max):
    c, lay, H = bell_line()
    assert len(enumerate_legal_graph(lay)) == 5
    s0 = initial_state(ClockSpace(lay))
    succ = np.zeros(lay.train_positions)
    succ[lay.position_index[(lay.terminus, 1)]] = 1
    mask = np.kron(np.ones(4), succ)
    for tau in (0.3, 2.0, 17.5):
        ref = sla.expm(-1j * tau * H.dense()) @ s0.amplitudes
        got = evolve(H, s0, tau, dense_max=dense_max).amplitudes
        assert np.abs(got - ref).max() <= 1e-8
        assert abs(mask @ np.abs(got) ** 2 - mask @ np.abs(ref) ** 2) <= 1e-8


def test_krylov_threads_bitwise():
    c = pad_with_identities(QuantumCircuit(2, (single("H", 0), cnot(0, 1))))
    lay = close_cycle(build_layout_3local(c))
    H = assemble(build_h3s(c, lay))
    s0 = initial_state(ClockSpace(lay))
    a = evolve(H, s0, 40.0, dense_max=0, threads=1).amplitudes
    b = evolve(H, s0, 40.0, dense_max=0, threads=4).amplitudes
    assert np.array_equal(a, b)
    assert np.abs(a - evolve(H, s0, 40.0).amplitudes).max() <= 1e-8


def test_krylov_failure_reports_residual():
    H = op(np.diag(np.linspace(-1e6, 1e6, 64)) + np.diag(np.ones(63), 1) + np.diag(np.ones(63), -1))
    s = state(np.ones(64))
    with pytest.raises(EvolutionError) as e:
        evolve(H, s, 1.0, dense_max=0, tol=1e-300, krylov_dim=2)
    assert e.value.residual >= 0


def test_evolve_errors():
    H = op(np.eye(2))
    with pytest.raises(ValueError):
        evolve(H, state([1, 0]), -1.0)
    with pytest.raises(ValueError):
        evolve(H, state([1, 0, 0]), 1.0)


def test_state_norm_checked():
    with pytest.raises(ValueError):
        SystemState(np.array([1.0, 1.0]), 0.0, SINGLE_TRAIN)


def test_norm_preserved_chain():
    _, lay, H = bell_line()
    s = initial_state(ClockSpace(lay))
    for tau in np.linspace(0.1, 10, 20):
        s = evolve(H, s, tau, dense_max=0)
        assert abs(np.linalg.norm(s.amplitudes) - 1) <= 1e-9


def test_train_distribution_initial():
    _, lay, _ = bell_line()
    p = train_distribution(initial_state(ClockSpace(lay)), lay)
    want = np.zeros(lay.train_positions)
    want[lay.position_index[(lay.origin, 1)]] = 1
    assert np.array_equal(p, want)


def test_train_distribution_history_state():
    c = pad_with_identities(QuantumCircuit(2, (single("H", 0), cnot(0, 1))))
    lay = close_cycle(build_layout_3local(c))
    g = enumerate_legal_graph(lay)
    phi = np.array([0.6, 0, 0.8, 0])
    hist = history_state(g, c, phi)
    p = train_distribution(hist, lay)
    # each node carries 1/N, split over its train placements by branch weight
    want = np.zeros(lay.train_positions)
    for nd in g.nodes:
        if len(nd.components) == 1:
            want[lay.position_index[(nd.components[0].site, nd.components[0].state)]] += 1 / len(g)
        else:
            work = apply_circuit_prefix(c, nd.prefix, phi).reshape(2, 2)
            p1 = float(np.sum(np.abs(work[1]) ** 2))  # control is qubit 0
            for comp in nd.components:
                w = 1 - p1 if comp.branch == "q0" else p1
                want[lay.position_index[(comp.site, comp.state)]] += w / len(g)
    np.testing.assert_allclose(p, want, atol=1e-12)
    assert p.min() >= -1e-12 and abs(p.sum() - 1) <= 1e-10
    assert abs(site_distribution(hist, lay).sum() - 1) <= 1e-10


def test_train_distribution_rep_mismatch():
    _, lay, _ = bell_line()
    s = initial_state(ClockSpace(lay, FULL_CLOCK))
    with pytest.raises(ValueError):
        train_distribution(s, lay)


def test_legal_leakage_under_evolution(rng):
    c = pad_with_identities(random_circuit(rng, 2, 3, min_cnots=1))
    lay = close_cycle(build_layout_3local(c))
    H = assemble(build_h3s(c, lay))
    g = enumerate_legal_graph(lay)
    V = embed_legal_basis(g, c, basis_state(2)).vectors
    s = initial_state(ClockSpace(lay))
    for tau in (1.0, 13.0, 250.0):
        a = evolve(H, s, tau).amplitudes
        leak = a - V @ (V.conj().T @ a)
        assert np.linalg.norm(leak) <= 1e-8


def test_averaging_kernel():
    assert averaging_kernel(np.array([0.0]), 5.0)[0] == 1
    d, T = 0.7, 3.0
    ts = np.linspace(0, T, 200001)
    num = np.trapezoid(np.exp(1j * d * ts), ts) / T
    assert abs(averaging_kernel(np.array([d]), T)[0] - num) <= 1e-9


def test_time_average_matches_quadrature():
    _, lay, H = bell_line()
    s0 = initial_state(ClockSpace(lay)).amplitudes
    mask = np.zeros(H.dim)
    mask[ClockSpace(lay).index(0, (lay.terminus, 1))] = 1
    T = 12.0
    w, V = np.linalg.eigh(H.dense())
    ts = np.linspace(0, T, 20001)
    vals = [mask @ np.abs(V @ (np.exp(-1j * w * t) * (V.conj().T @ s0))) ** 2 for t in ts]
    ref = np.trapezoid(vals, ts) / T
    got = time_averaged_expectation(H, s0, [mask], T)[0]
    assert abs(got - ref) <= 1e-6


def test_protocol_config_validation():
    for bad in (dict(tau_max=0), dict(tau_max=-1), dict(samples=0), dict(mode="other")):
        with pytest.raises(ValueError):
            ProtocolConfig(**bad)


def test_default_tau_max():
    assert default_tau_max(24) == pytest.approx(20 * 24 * np.log(24) ** 2)


def test_bell_protocol_exact(bell):
    res = run_protocol(bell)
    N = res.cycle_length
    assert N == 24
    assert res.success_probability >= 2 / 3 - 1 / (3 * N) - 0.1
    assert res.conditional_fidelity >= 1 - 1e-9
    blob = json.loads(res.dumps())
    for k in ("p_success", "stderr", "conditional_fidelity", "tau_max", "samples", "seed", "model",
              "cycle_length"):
        assert k in blob


def test_monte_carlo_deterministic(bell):
    cp = compile_protocol(bell)
    cfg = ProtocolConfig(samples=50, seed=7, mode=MONTE_CARLO)
    a = run_protocol(bell, cfg, compiled=cp)
    b = run_protocol(bell, cfg, compiled=cp)
    assert a.dumps() == b.dumps() and a.records == b.records
    c = run_protocol(bell, ProtocolConfig(samples=50, seed=8, mode=MONTE_CARLO), compiled=cp)
    assert c.records != a.records


def test_monte_carlo_prefix_stable(bell):
    cp = compile_protocol(bell)
    short = run_protocol(bell, ProtocolConfig(samples=10, seed=3, mode=MONTE_CARLO), compiled=cp)
    long = run_protocol(bell, ProtocolConfig(samples=30, seed=3, mode=MONTE_CARLO), compiled=cp)
    assert long.records[:10] == short.records


def test_monte_carlo_agrees_with_exact(bell):
    cp = compile_protocol(bell)
    ex = run_protocol(bell, ProtocolConfig(mode=EXACT_AVERAGE), compiled=cp)
    mc = run_protocol(bell, ProtocolConfig(samples=10000, seed=11, mode=MONTE_CARLO), compiled=cp)
    assert abs(mc.success_probability - ex.success_probability) <= 3 * mc.stderr
    assert mc.conditional_fidelity >= 1 - 1e-9


@pytest.mark.parametrize("model", ["3local", "qutrit"])
def test_fidelity_both_models(model, rng):
    for _ in range(2):
        c = random_circuit(rng, 2, 2, min_cnots=1)
        res = run_protocol(c, ProtocolConfig(tau_max=500.0), model=model)
        assert res.conditional_fidelity >= 1 - 1e-9
        assert 0 <= res.success_probability <= 1


def test_unknown_model(bell):
    with pytest.raises(ValueError):
        compile_protocol(bell, "other")


def small_sweep_pair():
    c = pad_with_identities(QuantumCircuit(1, (single("H", 0),)))
    lay = close_cycle(build_layout_3local(c))
    return assemble(build_h_init(lay)), assemble(build_h3s(c, lay)), initial_state(ClockSpace(lay))


def test_sweep_tiny_time():
    hI, hF, s0 = small_sweep_pair()
    out = adiabatic_sweep(hI, hF, 1e-9, 1, s0)
    assert np.abs(out.state.amplitudes - s0.amplitudes).max() <= 1e-8


def test_sweep_same_hamiltonian():
    _, hF, s0 = small_sweep_pair()
    out = adiabatic_sweep(hF, hF, 7.0, 5, s0)
    ref = evolve(hF, s0, 7.0)
    assert np.abs(out.state.amplitudes - ref.amplitudes).max() <= 1e-9


def test_sweep_reaches_ground_space():
    hI, hF, s0 = small_sweep_pair()
    out = adiabatic_sweep(hI, hF, 400.0, 400, s0)
    assert out.ground_overlap >= 0.99


def test_sweep_errors():
    hI, hF, s0 = small_sweep_pair()
    with pytest.raises(ValueError):
        adiabatic_sweep(hI, hF, 1.0, 0, s0)
    with pytest.raises(ValueError):
        adiabatic_sweep(hI, hF, -1.0, 1, s0)
    with pytest.raises(Exception):
        adiabatic_sweep(hI, zero_operator(3, SINGLE_TRAIN), 1.0, 1, s0)


@given(st.floats(0, 200), st.integers(0, 2**32 - 1))
def test_norm_property(tau, seed):
    c, lay, H = bell_line()
    rng = np.random.default_rng(seed)
    v = rng.normal(size=H.dim) + 1j * rng.normal(size=H.dim)
    out = evolve(H, state(v), tau)
    assert abs(np.linalg.norm(out.amplitudes) - 1) <= 1e-9
