import math
from dataclasses import replace

import numpy as np
import pytest

from psfnet.network import TrainConfig, mean_distance, split_indices, train
from psfnet.sweep import SweepReport, SweepRow, sweep

CFG = TrainConfig(max_epochs=40, seed=5)


@pytest.fixture(scope="module")
def report(small_dataset):
    return sweep(small_dataset, [2, 6], 3, CFG)


def test_rows_and_csv(report):
    assert [r.hidden for r in report.rows] == [2, 6]
    lines = report.to_csv().split("\n")
    assert lines[0] == "hidden,restarts_ok,mean_perf,avg_output_perf,std_perf"
    assert len(lines) == 4 and lines[-1] == ""
    cells = lines[1].split(",")
    assert cells[:2] == ["2", "3"]
    assert float(cells[2]) == pytest.approx(report.rows[0].mean_perf, rel=1e-11)


def test_ensemble_inequality(report):
    for row in report.rows:
        assert row.avg_output_perf <= row.mean_perf + 1e-12
        assert row.std_perf == pytest.approx(np.std(row.perfs, ddof=1))


def test_restarts_match_independent_runs(small_dataset, report):
    _, _, test = split_indices(len(small_dataset), 0.15, 0.15, CFG.seed)
    x, y = small_dataset.fields[test], small_dataset.targets()[test]
    for i in range(3):
        model, _ = train(small_dataset, replace(CFG, hidden_size=6, seed=CFG.seed + i,
                                                split_seed=CFG.seed))
        assert report.rows[1].perfs[i] == mean_distance(model.predict_raw(x), y)


def test_identical_members(small_dataset):
    rep = sweep(small_dataset, [4], 2, CFG, seed_step=0)
    row = rep.rows[0]
    assert row.mean_perf == pytest.approx(row.avg_output_perf, rel=1e-12)
    assert row.std_perf == 0.0


def test_needs_two_restarts(small_dataset):
    with pytest.raises(ValueError):
        sweep(small_dataset, [4], 1, CFG)


def test_failed_restarts_are_counted(small_dataset):
    cfg = TrainConfig(optimizer="momentum", learning_rate=1e6, max_epochs=50)
    rep = sweep(small_dataset, [4], 2, cfg)
    row = rep.rows[0]
    assert row.restarts_ok == 0 and len(row.failures) == 2
    assert math.isnan(row.mean_perf)
    assert rep.to_csv().split("\n")[1].startswith("4,0,nan")


def test_best_hidden():
    rows = [SweepRow(8, 2, 0.5, 0.4, 0.1), SweepRow(16, 2, 0.2, 0.1, 0.1),
            SweepRow(32, 0, math.nan, math.nan, math.nan)]
    assert SweepReport(rows).best_hidden() == 16
