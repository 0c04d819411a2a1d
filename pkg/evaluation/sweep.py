"""
Experiment orchestration: noise-level sweeps, component ablations and
hyper-parameter sensitivity curves.

Every cell generates its own domain pair from a seed derived from the repeat
index, trains one method variant and contributes exactly one row. Rows are
keyed by cell id so the table does not depend on worker scheduling.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from config import Config, ExperimentSpec, TrainConfig
from core.errors import CellFailedError, ConfigurationError
from data.synthetic import make_domain_pair
from evaluation.report import evaluate
from evaluation.workers import CellExecutor, CellOutcome
from training.trainer import Trainer

logger = logging.getLogger(__name__)

SWEEP_SCHEMA_VERSION = 1

VARIANTS: Dict[str, Callable[[TrainConfig], TrainConfig]] = {
    'ntda': lambda cfg: cfg,
    'no_noise_removal': lambda cfg: cfg.with_overrides(noise_removal=False),
    'no_adversarial': lambda cfg: cfg.with_overrides(adversarial=False),
    'baseline': lambda cfg: cfg.with_overrides(train_epochs=0),
}
SWEEP_METHODS = ('ntda', 'baseline')
ABLATION_VARIANTS = ('ntda', 'no_noise_removal', 'no_adversarial', 'baseline')
SENSITIVITY_PARAMETERS = ('lambda1', 'lambda2', 'eta', 'temperature')

COLUMNS = [
    'schema_version', 'cell_id', 'experiment', 'method', 'corruption', 'noise_level', 'repeat', 'seed',
    'parameter', 'value', 'target_accuracy', 'macro_precision', 'macro_recall', 'macro_f1',
    'selection_precision', 'selection_recall', 'retained_fraction',
]
REPORT_COLUMNS = ('target_accuracy', 'macro_precision', 'macro_recall', 'macro_f1',
                  'selection_precision', 'selection_recall', 'retained_fraction')


@dataclass(frozen=True)
class Cell:
    order: int
    experiment: str
    method: str
    spec: ExperimentSpec
    config: TrainConfig
    repeat: int
    parameter: Optional[str] = None
    value: Optional[float] = None

    @property
    def cell_id(self) -> str:
        tag = (f"{self.parameter}={self.value}" if self.parameter
               else f"{self.spec.corruption}@{self.spec.noise_level}")
        return f"{self.order:05d}:{tag}:r{self.repeat}:{self.method}"

    @property
    def data_seed(self) -> int:
        # make_domain_pair consumes seed, seed + 1 and seed + 2
        return 3 * self.config.seed


def repeat_config(base: TrainConfig, repeat: int) -> TrainConfig:
    return base.with_overrides(seed=base.seed + repeat)


def run_cell(cell: Cell) -> Dict:
    """Generate the cell's data, train its variant, evaluate on the labelled target"""
    source, target = make_domain_pair(cell.spec, cell.data_seed)
    config = VARIANTS[cell.method](cell.config)
    result = Trainer(config).train(source, target.features)
    report = evaluate(result.model, target, config, source=source)
    row = {
        'schema_version': SWEEP_SCHEMA_VERSION,
        'cell_id': cell.cell_id,
        'experiment': cell.experiment,
        'method': cell.method,
        'corruption': cell.spec.corruption,
        'noise_level': cell.spec.noise_level,
        'repeat': cell.repeat,
        'seed': config.seed,
        'parameter': cell.parameter,
        'value': cell.value,
    }
    row.update({k: getattr(report, k) for k in REPORT_COLUMNS})
    logger.info(f"Cell {cell.cell_id}: target accuracy {report.target_accuracy:.4f}")
    return row


def to_frame(rows: Sequence[Dict]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=COLUMNS)
    return frame.sort_values('cell_id', kind='stable').reset_index(drop=True)


def write_table(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_table(path) -> pd.DataFrame:
    return pd.read_csv(path)


def run_cells(cells: Sequence[Cell], output_path=None, workers: Optional[int] = None,
              on_row: Optional[Callable[[Cell, Dict], None]] = None) -> pd.DataFrame:
    """Execute cells; on the first failure the completed rows are written before raising"""
    by_id = {c.cell_id: c for c in cells}
    if len(by_id) != len(cells):
        raise ConfigurationError("duplicate experiment cells")
    rows: List[Dict] = []

    def collect(outcome: CellOutcome):
        if outcome.ok:
            rows.append(outcome.result)
            if on_row is not None:
                on_row(by_id[outcome.cell_id], outcome.result)

    executor = CellExecutor(workers or Config.SWEEP_WORKERS, on_complete=collect)
    for cell in cells:
        executor.submit(cell.cell_id, run_cell, cell)
    outcomes = executor.run(stop_on_error=True)

    frame = to_frame(rows)
    failed = [o for o in outcomes if not o.ok]
    if failed:
        partial = None
        if output_path is not None:
            partial = str(write_table(frame, output_path))
            logger.error(f"Flushed {len(frame)} completed rows to {partial} before aborting")
        raise CellFailedError(failed[0].cell_id, failed[0].error, partial)
    if output_path is not None:
        write_table(frame, output_path)
        logger.info(f"Wrote {len(frame)} rows to {output_path}")
    return frame


def _check_repeats(repeats: int):
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")


def sweep_cells(base: TrainConfig, spec: ExperimentSpec, noise_levels: Sequence[float],
                kinds: Sequence[str], repeats: int) -> List[Cell]:
    _check_repeats(repeats)
    if not noise_levels or not kinds:
        raise ConfigurationError("sweep needs at least one noise level and one corruption kind")
    cells = []
    for kind in kinds:
        for level in noise_levels:
            cell_spec = spec.with_overrides(corruption=kind, noise_level=float(level))
            for r in range(repeats):
                for method in SWEEP_METHODS:
                    cells.append(Cell(len(cells), 'sweep', method, cell_spec, repeat_config(base, r), r))
    return cells


def sweep(base_config: TrainConfig, spec: ExperimentSpec, noise_levels: Sequence[float],
          kinds: Sequence[str], repeats: int, output_path=None, workers: Optional[int] = None,
          **kwargs) -> pd.DataFrame:
    """NTDA and the source-only baseline for every (kind, level, repeat); one row each"""
    cells = sweep_cells(base_config, spec, noise_levels, kinds, repeats)
    logger.info(f"Sweep: {len(kinds)} kinds x {len(noise_levels)} levels x {repeats} repeats "
                f"x {len(SWEEP_METHODS)} methods = {len(cells)} cells")
    return run_cells(cells, output_path, workers, **kwargs)


def run_ablation(base_config: TrainConfig, spec: ExperimentSpec, repeats: int = 3, output_path=None,
                 workers: Optional[int] = None, **kwargs) -> pd.DataFrame:
    """Full method, each single-component removal, and the no-component baseline"""
    _check_repeats(repeats)
    spec.validate()
    cells = []
    for r in range(repeats):
        for variant in ABLATION_VARIANTS:
            cells.append(Cell(len(cells), 'ablation', variant, spec, repeat_config(base_config, r), r))
    return run_cells(cells, output_path, workers, **kwargs)


def run_sensitivity(base_config: TrainConfig, spec: ExperimentSpec, parameter: str, values: Sequence[float],
                    repeats: int = 1, output_path=None, workers: Optional[int] = None,
                    **kwargs) -> pd.DataFrame:
    """Full method under a fixed corruption, one hyper-parameter varied"""
    if parameter not in SENSITIVITY_PARAMETERS:
        raise ConfigurationError(f"parameter must be one of {SENSITIVITY_PARAMETERS}, got {parameter!r}")
    if not values:
        raise ConfigurationError("sensitivity needs at least one value")
    _check_repeats(repeats)
    spec.validate()
    cells = []
    for value in values:
        varied = base_config.with_overrides(**{parameter: float(value)})
        for r in range(repeats):
            cells.append(Cell(len(cells), 'sensitivity', 'ntda', spec, repeat_config(varied, r), r,
                              parameter=parameter, value=float(value)))
    return run_cells(cells, output_path, workers, **kwargs)


def summarize(frame: pd.DataFrame, by: Sequence[str] = ('method', 'corruption', 'noise_level')) -> pd.DataFrame:
    """Mean and standard deviation of target accuracy per group"""
    keys = [k for k in by if k in frame.columns and frame[k].notna().any()]
    grouped = frame.groupby(keys, dropna=False)['target_accuracy']
    return grouped.agg(['mean', 'std', 'count']).reset_index()
