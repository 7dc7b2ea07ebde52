"""End-to-end acceptance criteria, one test each.

Every test records a line ``ACCEPTANCE <n>: PASS|FAIL <detail>`` before
asserting, so the terminal summary lists all twelve even when some fail.
"""
import math
import time

import numpy as np
import pytest
from oracles import central_gradient, grid_destructiveness, random_measurement, relative_error

from qndtomo.bootstrap import bootstrap_run, resample
from qndtomo.channels import ideal_measurement
from qndtomo.circuits import build_schedule, graph_from_edges, planar_circuit_bound, seven_qubit_h_layout
from qndtomo.cli import main
from qndtomo.mle import GstEstimate, plan_problems, run_protocol
from qndtomo.mle.design import ChoiDesign
from qndtomo.mle.gst import GstModel
from qndtomo.mle.params import ChoiParam, PovmParam
from qndtomo.mle.tomography import heisenberg_effects, povm_loglik, prep_states, rotation_liouvilles
from qndtomo.quantifiers import (
    bell_measurement,
    choi_correlation,
    destructiveness,
    fidelity,
    flip_probability,
    povm_correlation,
    qndness,
)
from qndtomo.report import strip_header
from qndtomo.simulator import (
    DeviceModel,
    NoiseParams,
    build_decay_channel,
    build_edge_channel,
    execute,
    misassignment,
    thermal_decay_probability,
)

ONE = graph_from_edges(1, [])
PAIR = graph_from_edges(2, [(0, 1)])


def record(log, n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}"
    log.append(line)
    print(line)
    assert ok, line


def simulate(graph, noise, shots, seed, reset_fidelity=None):
    model = DeviceModel.build(graph, noise, seed=seed, reset_fidelity=reset_fidelity)
    schedule = build_schedule(graph, reset_variant=reset_fidelity is not None)
    return model, execute(model, schedule, shots, seed)


def test_1_circuit_accounting(acceptance_log):
    t = time.perf_counter()
    s = build_schedule(seven_qubit_h_layout())
    bound = planar_circuit_bound()
    dt = time.perf_counter() - t
    ok = len(s.color_groups) == 3 and len(s) == 64 + 18 + 3 * 324 == 1054 and bound == 4 * 18**2 + 4**3 + 18 == 1378
    record(acceptance_log, 1, ok and dt < 1.0,
           f"groups={len(s.color_groups)} batches={len(s)} bound={bound} ({dt:.2f} s)")


def test_2_problem_accounting(acceptance_log):
    g = seven_qubit_h_layout()
    t = time.perf_counter()
    plan = plan_problems(g)
    dt = time.perf_counter() - t
    _, counts = simulate(g, NoiseParams(), 200, 0)
    est = run_protocol(counts, g)
    ok = len(plan) == 3 * 7 + 5 * 6 == 51 and est.n_problems == 51 and dt < 1.0
    record(acceptance_log, 2, ok, f"planned={len(plan)} solved={est.n_problems} (planning {dt * 1e3:.1f} ms)")


def test_3_bell_constants(acceptance_log):
    bell = bell_measurement()
    marg = ideal_measurement(2)
    cp = povm_correlation(bell.povm(), marg.povm(), marg.povm())
    cc = choi_correlation(bell, marg, marg)
    ok = abs(cp - math.sqrt(6) / 8) <= 1e-9 and abs(cc - math.sqrt(7) / 32) <= 1e-9
    record(acceptance_log, 3, ok, f"C_povm={cp:.12f} (sqrt6/8) C_choi={cc:.12f} (sqrt7/32)")


def test_4_decay_constant(acceptance_log):
    p = NoiseParams().decay
    ok = abs(p - (1 - math.exp(-0.05))) <= 1e-12 and p == thermal_decay_probability(5.0, 100.0)
    record(acceptance_log, 4, ok, f"p_decay={p:.15f}")


def test_5_ideal_round_trip(acceptance_log):
    t = time.perf_counter()
    _, counts = simulate(PAIR, NoiseParams.ideal(), 100_000, 1)
    est = run_protocol(counts, PAIR)
    worst = {"F": 1.0, "Q": 1.0, "D": 0.0}
    for m in [*est.qubits.values(), *est.edges.values()]:
        worst["F"] = min(worst["F"], fidelity(m.povm()))
        worst["Q"] = min(worst["Q"], qndness(m))
        worst["D"] = max(worst["D"], destructiveness(m))
    dt = time.perf_counter() - t
    ok = worst["F"] >= 0.995 and worst["Q"] >= 0.995 and worst["D"] <= 0.005 and dt <= 300
    record(acceptance_log, 5, ok,
           f"min F={worst['F']:.5f} min Q={worst['Q']:.5f} max D={worst['D']:.5f} ({dt:.1f} s)")


def test_6_noisy_round_trip(acceptance_log):
    t = time.perf_counter()
    noise = NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02))
    truth = build_decay_channel(noise)
    _, counts = simulate(ONE, noise, 100_000, 2)
    m = run_protocol(counts, ONE).qubits[0]
    dist = max(np.linalg.norm(m[n].liouville - truth[n].liouville) for n in range(2))
    flip = flip_probability(m, 1, 1, 0)
    dt = time.perf_counter() - t
    ok = dist <= 0.03 and abs(flip - 0.05) <= 0.02 and dt <= 300
    record(acceptance_log, 6, ok,
           f"max Frobenius distance={dist:.4f} p_1(1->0)={flip:.4f} (true {flip_probability(truth, 1, 1, 0):.4f}) "
           f"({dt:.1f} s)")


@pytest.mark.slow
def test_7_crosstalk_detection(acceptance_log):
    """Signal edge (0, 1) and zero-strength control edge (2, 3) measured in the same batches."""
    t = time.perf_counter()
    g = graph_from_edges(4, [(0, 1), (2, 3)])
    noise = NoiseParams(eps_assign=misassignment(0.02))
    q = build_decay_channel(noise)
    edges = {(0, 1): build_edge_channel(q, q, 0.12), (2, 3): build_edge_channel(q, q, 0.0)}
    model = DeviceModel(g, (q,) * 4, edges, rng_seed=3)
    counts = execute(model, build_schedule(g), 100_000, 3)
    est = run_protocol(counts, g)
    boot = bootstrap_run(counts, g, n=200, seed=3, point=est)
    true_c = choi_correlation(edges[(0, 1)], q, q)
    c_sig = choi_correlation(est.edges[(0, 1)], est.qubits[0], est.qubits[1])
    c_ctl = choi_correlation(est.edges[(2, 3)], est.qubits[2], est.qubits[3])
    s_sig, s_ctl = boot.quantity_std["C_choi[0-1]"], boot.quantity_std["C_choi[2-3]"]
    dt = time.perf_counter() - t
    detected, quiet = c_sig > s_sig, c_ctl < 2 * s_ctl
    record(acceptance_log, 7, detected and quiet and dt <= 1200 and boot.n_failed == 0,
           f"true C={true_c:.5f}; signal C={c_sig:.5f} std={s_sig:.1e} ({'detected' if detected else 'missed'}); "
           f"control C={c_ctl:.2e} std={s_ctl:.1e} ratio={c_ctl / s_ctl:.1f} (needs < 2); "
           f"failed replicates={boot.n_failed} ({dt:.0f} s)")


def test_8_measure_and_reset(acceptance_log):
    t = time.perf_counter()
    noise = NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02))
    povms, spread, est = {}, {}, {}
    for mode, rf, seed in (("direct", None, 4), ("reset", 1.0, 5)):
        _, counts = simulate(ONE, noise, 100_000, seed, reset_fidelity=rf)
        est[mode] = run_protocol(counts, ONE)
        povms[mode] = np.array(est[mode].qubits[0].povm())
        reps = [np.array(run_protocol(resample(counts, [seed, r]), ONE).qubits[0].povm()) for r in range(16)]
        spread[mode] = np.std(reps, axis=0)
    sigma = np.sqrt(spread["direct"] ** 2 + spread["reset"] ** 2)
    z = float(np.max(np.abs(povms["direct"] - povms["reset"]) / np.maximum(sigma, 1e-12)))
    q_wrapped = qndness(est["reset"].qubits[0])
    f_direct = fidelity(est["direct"].qubits[0].povm())
    dt = time.perf_counter() - t
    ok = z <= 3.0 and abs(q_wrapped - f_direct) <= 0.01 and dt <= 300
    record(acceptance_log, 8, ok,
           f"max POVM deviation={z:.2f} sigma; Q_wrapped={q_wrapped:.4f} F_direct={f_direct:.4f} ({dt:.1f} s)")


def test_9_destructiveness_exact(acceptance_log, rng):
    t = time.perf_counter()
    worst = 0.0
    for i in range(20):
        d = 2 if i < 10 else 4
        m = random_measurement(d, d, rng)
        points = 100 if d == 2 else 10
        worst = max(worst, abs(destructiveness(m) - grid_destructiveness(m, points)))
    dt = time.perf_counter() - t
    record(acceptance_log, 9, worst <= 1e-6 and dt < 60,
           f"max |sign search - grid| over 10 one-qubit and 10 two-qubit channels={worst:.1e} ({dt:.1f} s)")


@pytest.mark.slow
def test_10_bootstrap_scaling(acceptance_log):
    t = time.perf_counter()
    noise = NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02))
    stds = {}
    for shots in (2500, 10_000, 40_000):
        _, counts = simulate(ONE, noise, shots, 6)
        boot = bootstrap_run(counts, ONE, n=100, seed=6, point=run_protocol(counts, ONE))
        elem = np.concatenate([s.ravel() for s in boot.choi_std.values()])
        stds[shots] = (float(np.median(elem[elem > 1e-9])), boot.quantity_std["Q[0]"])
    ratios = [stds[a][k] / stds[b][k] for a, b in ((2500, 10_000), (10_000, 40_000)) for k in (0, 1)]
    dt = time.perf_counter() - t
    ok = all(1.0 <= r <= 4.0 for r in ratios) and dt <= 600
    record(acceptance_log, 10, ok,
           "std ratio per 4x shots (median Choi element, Q): " + ", ".join(f"{r:.2f}" for r in ratios)
           + f" ({dt:.0f} s)")


def test_11_gradient_checks(acceptance_log, rng):
    t = time.perf_counter()
    errors = {"gst": 0.0, "povm": 0.0, "choi": 0.0}

    model = GstModel()
    gcounts = rng.integers(1, 100, size=(4, 4, 4, 2)).astype(float)
    pparam = PovmParam(4, 4)
    gs = [GstEstimate.ideal()] * 2
    states = prep_states(gs)
    pcounts = rng.integers(1, 50, size=(len(states), 4)).astype(float)
    single = [GstEstimate.ideal()]
    design = ChoiDesign(prep_states(single), heisenberg_effects(rotation_liouvilles(single), single[0].povm))
    ccounts = rng.integers(1, 30, size=design.shape).astype(float)
    cparam = ChoiParam.for_povm_element(np.diag([0.9, 0.1]).astype(complex))

    def povm_f(x):
        return povm_loglik(pparam.build(x)[0], states, pcounts)[0]

    def choi_f(x):
        return design.loglik(cparam.build(x)[0], ccounts)[0]

    for _ in range(10):
        x = model.params_from(GstEstimate.ideal(), mix=0.3) + 0.2 * rng.normal(size=model.size)
        g = model.loglik(x, gcounts)[1]
        errors["gst"] = max(errors["gst"], relative_error(g, central_gradient(lambda y: model.loglik(y, gcounts)[0], x)))

        x = rng.normal(size=pparam.size)
        elems, vjp = pparam.build(x)
        g = vjp(povm_loglik(elems, states, pcounts)[1])
        errors["povm"] = max(errors["povm"], relative_error(g, central_gradient(povm_f, x)))

        x = rng.normal(size=cparam.size)
        y, vjp = cparam.build(x)
        g = vjp(design.loglik(y, ccounts)[1])
        errors["choi"] = max(errors["choi"], relative_error(g, central_gradient(choi_f, x)))
    dt = time.perf_counter() - t
    ok = max(errors.values()) <= 1e-5 and dt < 60
    record(acceptance_log, 11, ok, " ".join(f"{k}={v:.1e}" for k, v in errors.items()) + f" ({dt:.1f} s)")


def test_12_determinism(acceptance_log, tmp_path):
    t = time.perf_counter()
    cfg = tmp_path / "pair.toml"
    cfg.write_text('mode = "both"\n[device]\nn_qubits = 2\nedges = [[0, 1]]\ncrosstalk_strength = 0.05\n'
                   '[device.noise]\nmisassignment = 0.02\n[run]\nshots = 4000\nseed = 9\nbootstrap = 3\n')
    codes = [main(["all", "--config", str(cfg), "--out", str(tmp_path / run)]) for run in ("a", "b")]
    a, b = ((tmp_path / run / "report.md").read_text() for run in ("a", "b"))
    same_body = strip_header(a) == strip_header(b)
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same_csv = all((tmp_path / "a" / n).read_text() == (tmp_path / "b" / n).read_text() for n in csvs)
    dt = time.perf_counter() - t
    ok = codes == [0, 0] and same_body and same_csv and dt <= 600
    record(acceptance_log, 12, ok,
           f"exit codes={codes} report bodies identical={same_body} {len(csvs)} CSVs identical={same_csv} "
           f"({dt:.0f} s)")
