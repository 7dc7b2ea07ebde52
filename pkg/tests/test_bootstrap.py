import numpy as np
import pytest

from qndtomo import bootstrap as bootstrap_module
from qndtomo.bootstrap import BootstrapResult, _Moments, attach_std, bootstrap_run, choi_elements, resample
from qndtomo.circuits import build_schedule, graph_from_edges
from qndtomo.mle import SolverError, run_protocol
from qndtomo.quantifiers import assess
from qndtomo.simulator import DeviceModel, NoiseParams, execute, misassignment

ONE = graph_from_edges(1, [])


@pytest.fixture(scope="module")
def one_qubit():
    model = DeviceModel.build(ONE, NoiseParams(p_decay=0.05, eps_assign=misassignment(0.02)), seed=4)
    counts = execute(model, build_schedule(ONE), 5000)
    return counts, run_protocol(counts, ONE)


def test_resample_keeps_totals_and_is_seeded(one_qubit):
    counts, _ = one_qubit
    a = resample(counts, [1, 0])
    a.check_totals()
    assert a.to_csv() == resample(counts, [1, 0]).to_csv()
    assert a.to_csv() != resample(counts, [1, 1]).to_csv()
    assert a.to_csv() != counts.to_csv()


def test_moments_match_numpy(rng):
    xs = rng.normal(5.0, 0.1, size=50) + 1j * rng.normal(size=50)
    acc = _Moments(xs[0])
    for x in xs:
        acc.add(x)
    assert acc.mean() == pytest.approx(xs.mean())
    expected = np.sqrt(np.var(xs.real, ddof=1) + np.var(xs.imag, ddof=1))
    assert acc.std() == pytest.approx(expected)


def test_bootstrap_run(one_qubit):
    counts, point = one_qubit
    res = bootstrap_run(counts, ONE, n=8, seed=2, point=point)
    assert res.n_resamples == 8 and res.n_failed == 0 and not res.flagged
    assert all(v >= 0 for v in res.quantity_std.values())
    assert set(res.choi_std) == set(choi_elements(point))
    assert res.quantity_std["F[0]"] == 0.0  # GST held fixed
    assert res.quantity_std["Q[0]"] > 0
    same = bootstrap_run(counts, ONE, n=8, seed=2, point=point, jobs=3)
    assert same.to_dict() == res.to_dict()
    assert BootstrapResult.from_dict(res.to_dict()).to_dict() == res.to_dict()
    reports = assess(point)
    attach_std(reports, res)
    assert reports[0].std["Q"] == res.quantity_std["Q[0]"]


def test_bootstrap_can_rerun_gst(one_qubit):
    counts, point = one_qubit
    res = bootstrap_run(counts, ONE, n=3, seed=2, point=point, rerun_gst=True)
    assert res.quantity_std["F[0]"] > 0


def test_failed_replicates_are_counted(one_qubit, monkeypatch):
    counts, point = one_qubit
    real = bootstrap_module.run_protocol
    calls = []

    def flaky(table, graph, cfg, gst_fixed=None):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("choi:0:1", "boom")
        return real(table, graph, cfg, gst_fixed=gst_fixed)

    monkeypatch.setattr(bootstrap_module, "run_protocol", flaky)
    res = bootstrap_run(counts, ONE, n=4, seed=0, point=point)
    assert res.n_failed == 1 and res.flagged
    assert res.failed_problems == ["1:choi:0:1"]


def test_needs_two_resamples(one_qubit):
    counts, point = one_qubit
    with pytest.raises(ValueError):
        bootstrap_run(counts, ONE, n=1, point=point)
