import numpy as np
import pytest
from oracles import central_gradient, relative_error

from qndtomo.channels import ChoiMatrix, Povm, QndMeasurement
from qndtomo.circuits import build_schedule, graph_from_edges, seven_qubit_h_layout
from qndtomo.linalg import herm, random_density, random_hermitian
from qndtomo.mle import EstimateSet, OptimizerConfig, SolverError, gauge_fix, gst_mle, plan_problems, run_protocol
from qndtomo.mle import protocol as protocol_module
from qndtomo.mle.design import ChoiDesign
from qndtomo.mle.gst import GstEstimate, GstModel
from qndtomo.mle.interior import solve_choi_interior
from qndtomo.mle.optimizer import maximize
from qndtomo.mle.params import ChoiParam, PovmParam, ptrace_out
from qndtomo.mle.tomography import choi_design, choi_loglik, choi_mle, povm_loglik, povm_mle
from qndtomo.simulator import DeviceModel, NoiseParams, build_decay_channel, execute, misassignment


def ideal_design(dim_qubits):
    """Ideal preparation states and rotated final-readout effects of the QND-MT family."""
    from qndtomo.mle.tomography import heisenberg_effects, prep_states, rotation_liouvilles

    g = GstEstimate.ideal()
    gs = [g] * dim_qubits
    final = g.povm if dim_qubits == 1 else Povm(tuple(np.kron(a, b) for a in g.povm for b in g.povm))
    return prep_states(gs), heisenberg_effects(rotation_liouvilles(gs), final)


@pytest.fixture(scope="module")
def noisy_block():
    """Expected counts of outcome 1 of a decay channel under ideal design (no sampling noise)."""
    truth = build_decay_channel(NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02)))
    states, effects = ideal_design(1)
    dense = choi_design(states, effects)
    q = np.real(np.einsum("vumab,ba->vum", dense, truth[1].psd))
    return truth, states, effects, 1e5 * q


# gradients -------------------------------------------------------------------

def test_gst_gradient(rng):
    model = GstModel()
    counts = rng.integers(1, 100, size=(4, 4, 4, 2)).astype(float)
    for _ in range(10):
        x = model.params_from(GstEstimate.ideal(), mix=0.3) + 0.2 * rng.normal(size=model.size)
        _, g = model.loglik(x, counts)
        fd = central_gradient(lambda y: model.loglik(y, counts)[0], x)
        assert relative_error(g, fd) < 1e-5


def test_gst_penalty_gradient(rng):
    model = GstModel()
    x = rng.normal(size=model.size)
    _, g = model.penalty(x)
    assert relative_error(g, central_gradient(lambda y: model.penalty(y)[0], x)) < 1e-6


@pytest.mark.parametrize("dim,n_out", [(2, 2), (4, 4)])
def test_povm_gradient(dim, n_out, rng):
    param = PovmParam(dim, n_out)
    states = np.array([random_density(dim, rng) for _ in range(6)])
    counts = rng.integers(1, 50, size=(6, n_out)).astype(float)

    def f(x):
        elems, _ = param.build(x)
        return povm_loglik(elems, states, counts)[0]

    for _ in range(10):
        x = rng.normal(size=param.size)
        elems, vjp = param.build(x)
        g = vjp(povm_loglik(elems, states, counts)[1])
        assert relative_error(g, central_gradient(f, x)) < 1e-5


@pytest.mark.parametrize("dim_qubits", [1, 2])
def test_choi_design_matches_dense_oracle(dim_qubits, rng):
    states, effects = ideal_design(dim_qubits)
    d = 2 ** dim_qubits
    design, dense = ChoiDesign(states, effects), choi_design(states, effects)
    counts = rng.integers(0, 20, size=dense.shape[:3]).astype(float)
    y = herm(random_density(d * d, rng))
    v1, g1 = design.loglik(y, counts)
    v2, g2 = choi_loglik(y, dense, counts)
    assert v1 == pytest.approx(v2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, atol=1e-8 * np.abs(g2).max())


def test_choi_gradient_through_parameterisation(rng):
    states, effects = ideal_design(1)
    design = ChoiDesign(states, effects)
    counts = rng.integers(1, 30, size=design.shape).astype(float)
    param = ChoiParam.for_povm_element(np.diag([0.9, 0.1]).astype(complex))

    def f(x):
        return design.loglik(param.build(x)[0], counts)[0]

    for _ in range(10):
        x = rng.normal(size=param.size)
        y, vjp = param.build(x)
        np.testing.assert_allclose(ptrace_out(y, 2), np.diag([0.9, 0.1]), atol=1e-12)
        g = vjp(design.loglik(y, counts)[1])
        assert relative_error(g, central_gradient(f, x)) < 1e-5


def test_dense_choi_gradient_is_the_directional_derivative(rng):
    states, effects = ideal_design(1)
    dense = choi_design(states, effects)
    counts = rng.integers(1, 30, size=dense.shape[:3]).astype(float)
    y = random_density(4, rng)
    _, g = choi_loglik(y, dense, counts)
    d = random_hermitian(4, rng)
    h = 1e-7
    fd = (choi_loglik(y + h * d, dense, counts)[0] - choi_loglik(y - h * d, dense, counts)[0]) / (2 * h)
    assert np.real(np.trace(g @ d)) == pytest.approx(fd, rel=1e-5)


# solvers -------------------------------------------------------------------

def test_interior_solver_is_feasible_and_optimal(noisy_block):
    truth, states, effects, counts = noisy_block
    pi = truth.povm()[1]
    cfg = OptimizerConfig()
    design = ChoiDesign(states, effects)
    choi, fit = solve_choi_interior(design, counts, pi.T, cfg)
    assert fit.converged
    assert np.abs(ptrace_out(choi, 2) - pi.T).max() < 1e-12
    assert np.linalg.eigvalsh(choi).min() > -1e-12
    assert all(b >= a - 1e-9 for a, b in zip(fit.history, fit.history[1:]))
    # expected counts are exactly realisable, so the truth is the optimum
    assert fit.objective >= design.loglik(truth[1].psd, counts)[0] - 1e-3
    assert np.linalg.norm(choi - truth[1].psd) < 1e-3

    # a local method from the same problem cannot do better
    param = ChoiParam.for_povm_element(pi)
    lbfgs = maximize(lambda x: (lambda y, v: (design.loglik(y, counts)[0], v(design.loglik(y, counts)[1])))(
        *param.build(x)), param.init(np.eye(4) / 4), cfg, scale=counts.sum())
    assert fit.objective >= lbfgs.objective - 1e-3


def test_penalty_path_agrees_with_exact_path(noisy_block):
    truth, states, effects, counts = noisy_block
    pi = truth.povm()[1]
    exact, f1 = choi_mle(counts, pi, states, effects, (1,), OptimizerConfig())
    pen, f2 = choi_mle(counts, pi, states, effects, (1,), OptimizerConfig(choi_constraint="penalty"))
    assert f2.constraint_residual < 1e-6
    assert np.linalg.norm(exact.psd - pen.psd) < 1e-2
    # with expected counts the truth is the constrained optimum; the penalty
    # path can only exceed it through its residual constraint violation
    best = ChoiDesign(states, effects).loglik(truth[1].psd, counts)[0]
    assert f1.objective == pytest.approx(best, abs=1e-3)
    assert f2.objective - best <= counts.sum() * 2 * f2.constraint_residual / np.trace(pi).real


def test_lbfgs_history_is_monotone(rng):
    states = np.array([random_density(2, rng) for _ in range(6)])
    counts = rng.integers(1, 100, size=(6, 2)).astype(float)
    _, fit = povm_mle(counts, states)
    assert fit.converged
    assert all(b >= a - 1e-9 for a, b in zip(fit.history, fit.history[1:]))


def test_povm_mle_recovers_truth():
    truth = NoiseParams(eps_assign=misassignment(0.03, 0.07))
    pov = build_decay_channel(truth).povm()
    states, _ = ideal_design(1)
    counts = 1e6 * np.real(np.einsum("nab,vba->vn", np.array(list(pov)), states))
    est, fit = povm_mle(counts, states)
    for a, b in zip(est, pov):
        np.testing.assert_allclose(a, b, atol=1e-4)
    assert est.is_valid()


def test_gst_probabilities_fit_the_data_and_survive_gauge_fix():
    g = graph_from_edges(1, [])
    model = DeviceModel.build(g, NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02), gate_depolarizing=0.01))
    counts = execute(model, build_schedule(g), 20000, seed=2)
    est, fit = gst_mle(counts, gauge=False)
    freq = counts.gst(0) / 20000
    assert np.abs(est.probabilities() - freq).max() < 0.02
    fixed = gauge_fix(est)
    np.testing.assert_allclose(fixed.probabilities(), est.probabilities(), atol=1e-8)
    assert fixed.is_physical()


# protocol ------------------------------------------------------------------

def test_problem_accounting():
    plan = plan_problems(seven_qubit_h_layout())
    assert len(plan) == 3 * 7 + 5 * 6 == 51
    assert len({p.problem_id for p in plan}) == 51


@pytest.fixture(scope="module")
def pair_counts():
    g = graph_from_edges(2, [(0, 1)])
    model = DeviceModel.build(g, NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02)), 0.05)
    return g, execute(model, build_schedule(g), 3000, seed=11)


def test_protocol_is_independent_of_jobs(pair_counts):
    g, counts = pair_counts
    a = run_protocol(counts, g, jobs=1)
    b = run_protocol(counts, g, jobs=4)
    assert a.to_dict() == b.to_dict()
    assert a.n_problems == 11 and not a.failed()
    back = EstimateSet.from_dict(a.to_dict())
    assert back.to_dict() == a.to_dict()
    for m in list(a.qubits.values()) + list(a.edges.values()):
        assert m.is_physical(tp_tol=1e-6)


def test_solver_errors_carry_problem_ids(pair_counts, monkeypatch):
    g, counts = pair_counts

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(protocol_module, "povm_mle", broken)
    with pytest.raises(SolverError) as info:
        run_protocol(counts, g)
    assert info.value.problem_id == "povm:0-1"


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(choi_constraint="magic")
    with pytest.raises(ValueError):
        OptimizerConfig(max_iterations=0)
    cfg = OptimizerConfig(seed=3)
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.rng("a").integers(1 << 30) == cfg.rng("a").integers(1 << 30)


def test_zero_povm_element_gives_zero_block():
    states, effects = ideal_design(1)
    counts = np.zeros((6, 3, 2))
    c, fit = choi_mle(counts, np.zeros((2, 2), dtype=complex), states, effects, (0,))
    assert np.all(c.psd == 0) and fit.converged
    assert isinstance(QndMeasurement((c, ChoiMatrix(2, (1,), np.eye(4)))), QndMeasurement)
