"""Hidden-layer size sweep with repeated restarts.

For every hidden size the network is trained ``restarts`` times with seeds
``seed + i * seed_step`` on one fixed split. Each size gets two scores on
the held-out test set:

* ``mean_perf``: the average over restarts of each network's mean distance
* ``avg_output_perf``: the mean distance of the restart-averaged output

Because the distance is a Euclidean norm, ``avg_output_perf <= mean_perf``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InsufficientDataError, PsfError
from .grid import PsfDataset
from .network import TrainConfig, mean_distance, split_indices, train

log = logging.getLogger(__name__)

DEFAULT_HIDDEN_SIZES = (8, 16, 32, 64, 96, 128, 192, 256, 448)


@dataclass
class SweepRow:
    hidden: int
    restarts_ok: int
    mean_perf: float
    avg_output_perf: float
    std_perf: float
    perfs: list = field(default_factory=list)
    failures: list = field(default_factory=list)


@dataclass
class SweepReport:
    rows: list

    CSV_HEADER = "hidden,restarts_ok,mean_perf,avg_output_perf,std_perf"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.hidden},{r.restarts_ok},{r.mean_perf:.12g},"
                         f"{r.avg_output_perf:.12g},{r.std_perf:.12g}")
        return "\n".join(lines) + "\n"

    def best_hidden(self) -> int:
        scored = [r for r in self.rows if r.restarts_ok]
        return min(scored, key=lambda r: r.mean_perf).hidden


def sweep(dataset: PsfDataset, hidden_sizes, restarts: int, cfg: TrainConfig,
          seed_step: int = 1) -> SweepReport:
    if restarts < 2:
        raise ValueError("a sweep needs at least two restarts per hidden size")
    split_seed = cfg.seed if cfg.split_seed is None else cfg.split_seed
    _, _, test = split_indices(len(dataset), cfg.validation_fraction, cfg.test_fraction,
                               split_seed)
    if len(test) == 0:
        raise InsufficientDataError("dataset too small to hold out a test set")
    x_test = dataset.fields[test]
    y_test = dataset.targets()[test]

    rows = []
    for hidden in hidden_sizes:
        outputs, perfs, failures = [], [], []
        for i in range(restarts):
            run_cfg = replace(cfg, hidden_size=int(hidden), seed=cfg.seed + i * seed_step,
                              split_seed=split_seed)
            try:
                model, _ = train(dataset, run_cfg)
            except PsfError as exc:
                log.warning("H=%d restart %d failed: %s", hidden, i, exc)
                failures.append((i, str(exc)))
                continue
            pred = model.predict_raw(x_test)
            outputs.append(pred)
            perfs.append(mean_distance(pred, y_test))
        if outputs:
            row = SweepRow(
                hidden=int(hidden),
                restarts_ok=len(outputs),
                mean_perf=float(np.mean(perfs)),
                avg_output_perf=mean_distance(np.mean(outputs, axis=0), y_test),
                std_perf=float(np.std(perfs, ddof=1)) if len(perfs) > 1 else 0.0,
                perfs=perfs,
                failures=failures,
            )
        else:
            nan = float("nan")
            row = SweepRow(int(hidden), 0, nan, nan, nan, [], failures)
        log.info("H=%d: mean %.6g, averaged output %.6g (%d ok)", row.hidden, row.mean_perf,
                 row.avg_output_perf, row.restarts_ok)
        rows.append(row)
    return SweepReport(rows)
