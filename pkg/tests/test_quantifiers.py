import numpy as np
import pytest
from oracles import grid_destructiveness, random_measurement

from qndtomo.channels import ChoiMatrix, QndMeasurement, ideal_measurement, measurement_tensor
from qndtomo.quantifiers import (
    CSV_COLUMNS,
    QualityReport,
    bell_measurement,
    bell_states,
    choi_correlation,
    destructiveness,
    fidelity,
    flip_key,
    flip_probability,
    flip_table,
    povm_correlation,
    qndness,
    quality_report,
    quantities,
    reports_csv,
)
from qndtomo.simulator import NoiseParams, build_decay_channel, misassignment


@pytest.mark.parametrize("d", [2, 4])
def test_ideal_measurement_is_perfect(d):
    m = ideal_measurement(d)
    assert fidelity(m.povm()) == 1.0
    assert qndness(m) == 1.0
    assert destructiveness(m) == pytest.approx(0.0, abs=1e-12)


def test_decay_channel_quantifiers():
    pd, e = 0.05, 0.02
    m = build_decay_channel(NoiseParams(p_decay=pd, eps_assign=misassignment(e)))
    assert fidelity(m.povm()) == pytest.approx(1 - e)
    # |0> read as 0 and left in |0>: 0.98; |1> read as 1 and left in |1>: 0.98 * 0.95
    assert qndness(m) == pytest.approx(((1 - e) + (1 - e) * (1 - pd)) / 2)
    assert flip_probability(m, 1, 1, 0) == pytest.approx((1 - e) * pd)
    assert flip_probability(m, (1,), (1,), (0,)) == flip_probability(m, 1, 1, 0)
    # O_c = Z: Z - E^dagger(Z) = diag(0, -2 pd) up to sign
    assert destructiveness(m) == pytest.approx(pd)


def test_replace_with_maximally_mixed_state():
    # E(rho) = Tr(rho) I / 2 split evenly over two outcomes
    blocks = tuple(ChoiMatrix.from_map(lambda x: np.trace(x) * np.eye(2) / 4, 2, (n,)) for n in range(2))
    m = QndMeasurement(blocks)
    assert destructiveness(m) == pytest.approx(0.5)


def test_destructiveness_matches_grid_oracle(rng):
    for _ in range(5):
        m = random_measurement(2, 2, rng)
        assert destructiveness(m) == pytest.approx(grid_destructiveness(m, 101), abs=1e-6)


def test_degenerate_observable_rejected():
    m = ideal_measurement(2)
    with pytest.raises(ValueError, match="degenerate"):
        destructiveness(m, np.eye(2))
    with pytest.raises(ValueError, match="diagonal"):
        destructiveness(m, np.array([[0, 1], [1, 0]], dtype=complex))


def test_bell_constants():
    bell = bell_measurement()
    assert bell.is_physical()
    marg = ideal_measurement(2)
    assert povm_correlation(bell.povm(), marg.povm(), marg.povm()) == pytest.approx(np.sqrt(6) / 8, abs=1e-9)
    assert choi_correlation(bell, marg, marg) == pytest.approx(np.sqrt(7) / 32, abs=1e-9)
    s = bell_states()
    np.testing.assert_allclose(s @ s.conj().T, np.eye(4), atol=1e-12)


def test_product_measurement_has_no_correlation():
    a = build_decay_channel(NoiseParams(p_decay=0.1))
    b = build_decay_channel(NoiseParams(eps_assign=misassignment(0.05)))
    joint = measurement_tensor(a, b)
    assert choi_correlation(joint, a, b) == pytest.approx(0.0, abs=1e-15)
    assert povm_correlation(joint.povm(), a.povm(), b.povm()) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        choi_correlation(a, a, b)


def test_flip_table_labels():
    m = measurement_tensor(ideal_measurement(2), ideal_measurement(2))
    t = flip_table(m)
    assert len(t) == 64
    assert t[flip_key(2, 2, 2, 2)] == pytest.approx(1.0)
    assert t["10:10->10"] == pytest.approx(1.0)
    assert t["10:01->01"] == 0.0


def test_report_round_trip_and_csv():
    m = build_decay_channel(NoiseParams(p_decay=0.05))
    rep = quality_report("0", m)
    rep.std["F"] = 0.01
    back = QualityReport.from_dict(rep.to_dict())
    assert back == rep
    assert rep.arithmetic_mean == pytest.approx((rep.fidelity + rep.qndness + 1 - rep.destructiveness) / 3)
    lines = reports_csv([rep]).splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert lines[1].split(",")[CSV_COLUMNS.index("F_std")] == "0.01"
    q = quantities([rep])
    assert q["F[0]"] == rep.fidelity and "p[0]1:1->0" in q
