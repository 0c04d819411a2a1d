"""Command-line entry point for the noise tolerant domain adaptation toolkit."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from config import Config, TrainConfig, load_config_file
from core.errors import ConfigurationError, MissingInputError, UsageError
from core.gradcheck import CHECKS, run_gradcheck
from core.model import ModelState
from core.noisemodel import compute_weights
from data import storage
from data.dataset import DomainTag
from data.synthetic import make_domain_pair
from database.registry_models import open_registry
from evaluation.report import evaluate, export_embeddings
from evaluation.sweep import SENSITIVITY_PARAMETERS, run_ablation, run_sensitivity, summarize, sweep
from training.trainer import Trainer
from utils.decorators import handle_errors
from utils.monitoring import TrainingMonitor, configure_logging

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors share the JSON error line"""

    def error(self, message):
        raise UsageError(message)


def _floats(raw: str) -> List[float]:
    try:
        return [float(v) for v in raw.split(',') if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {raw!r}")


def _names(raw: str) -> List[str]:
    return [v.strip() for v in raw.split(',') if v.strip()]


def _require_files(*paths: Optional[str]):
    """Fail before any output is written"""
    for path in paths:
        if path is not None and not Path(path).is_file():
            raise MissingInputError(f"input not found: {path}")


def _print_json(data) -> None:
    print(json.dumps(data, sort_keys=True, indent=2))


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file with "train" and "data" sections')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='override a config value, e.g. train.lambda2=0 (repeatable)')
    common.add_argument('--seed', type=int, default=None, help='training / generation seed')
    common.add_argument('--log-level', default=Config.LOG_LEVEL, help='logging level (default: NTDA_LOG_LEVEL)')
    common.add_argument('--registry', default=None, help='SQLAlchemy URL of the run registry')

    parser = ArgumentParser(prog='ntda', description='Noise tolerant domain adaptation on synthetic data')
    commands = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    commands.required = True

    p = commands.add_parser('generate', parents=[common], help='generate a corrupted source and shifted target')
    p.add_argument('--source-out', required=True)
    p.add_argument('--target-out', required=True)

    p = commands.add_parser('train', parents=[common], help='train NTDA and write model, records and report')
    p.add_argument('--source', required=True)
    p.add_argument('--target', required=True, help='target dataset; labels are used for the report only')
    p.add_argument('--out', default=None, help='output directory (default: NTDA_RUNS_DIR/seed<seed>)')

    p = commands.add_parser('eval', parents=[common], help='evaluate a saved model on a labelled target')
    p.add_argument('--model', required=True)
    p.add_argument('--target', required=True)
    p.add_argument('--source', default=None, help='corrupted source with clean flags, for selection metrics')
    p.add_argument('--out', default=None, help='write the report here instead of stdout')

    p = commands.add_parser('sweep', parents=[common], help='noise-level sweep or sensitivity curve')
    p.add_argument('--levels', type=_floats, default=[0.0, 0.2, 0.4, 0.6])
    p.add_argument('--kinds', type=_names, default=['label', 'feature', 'mixed'])
    p.add_argument('--repeats', type=int, default=3)
    p.add_argument('--parameter', choices=SENSITIVITY_PARAMETERS, default=None,
                   help='vary this hyper-parameter instead of the noise level')
    p.add_argument('--values', type=_floats, default=None)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--out', required=True, help='CSV output path')

    p = commands.add_parser('ablate', parents=[common], help='full method against component removals')
    p.add_argument('--repeats', type=int, default=3)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--out', required=True, help='CSV output path')

    p = commands.add_parser('export-embeddings', parents=[common], help='write embeddings for offline plotting')
    p.add_argument('--model', required=True)
    p.add_argument('--source', required=True)
    p.add_argument('--target', required=True)
    p.add_argument('--out', required=True)

    p = commands.add_parser('gradcheck', parents=[common], help='finite-difference check of every gradient')
    p.add_argument('--states', type=int, default=Config.GRADCHECK_STATES)
    p.add_argument('--step', type=float, default=Config.GRADCHECK_STEP)
    p.add_argument('--tol', type=float, default=Config.GRADCHECK_TOL)
    p.add_argument('--checks', type=_names, default=None, help=f"subset of: {', '.join(CHECKS)}")

    p = commands.add_parser('runs', parents=[common], help='list registered runs')
    p.add_argument('--limit', type=int, default=20)
    p.add_argument('--filter-command', default=None)
    return parser


def _load_model_config(model_path: str, args) -> tuple:
    model, stored = ModelState.load(model_path)
    if stored is not None and not args.config and not args.overrides:
        config = TrainConfig.from_dict(stored)
        if args.seed is not None:
            config = config.with_overrides(seed=args.seed)
    else:
        config, _ = load_config_file(args.config, args.overrides, args.seed)
    return model, config


def cmd_generate(args) -> int:
    train_cfg, spec = load_config_file(args.config, args.overrides, args.seed)
    source, target = make_domain_pair(spec, train_cfg.seed)
    storage.save(args.source_out, source)
    storage.save(args.target_out, target)
    _print_json({'source': args.source_out, 'target': args.target_out,
                 'source_samples': source.n_samples, 'target_samples': target.n_samples,
                 'source_clean_fraction': float(source.clean_flags.mean()) if source.n_samples else 1.0})
    return 0


def cmd_train(args) -> int:
    _require_files(args.source, args.target)
    config, _ = load_config_file(args.config, args.overrides, args.seed)
    source = storage.load(args.source)
    target = storage.load(args.target)
    if source.domain_tag is not DomainTag.SOURCE or target.domain_tag is not DomainTag.TARGET:
        raise UsageError("--source must be a source dataset and --target a target dataset")

    out = Path(args.out) if args.out else Path(Config.RUNS_DIR) / f'seed{config.seed}'
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / 'records.jsonl'
    if records_path.exists():
        records_path.unlink()

    monitor = TrainingMonitor()
    trainer = Trainer(config, monitor=monitor, records_path=records_path, checkpoint_dir=out / 'checkpoints')
    result = trainer.train(source, target.features)
    result.model.save(out / 'model.json', config.to_dict())
    report = evaluate(result.model, target, config, source=source)
    report.save(out / 'report.json')

    registry = open_registry(args.registry)
    if registry is not None:
        registry.record_run('train', config.to_dict(), report.to_dict(), result.records,
                            corruption=source.metadata.get('corruption', {}).get('kind'),
                            noise_level=source.metadata.get('corruption', {}).get('p_noise'))
    _print_json({'output_dir': str(out), 'report': report.to_dict(), 'monitor': monitor.get_summary()})
    return 0


def cmd_eval(args) -> int:
    _require_files(args.model, args.target, args.source)
    model, config = _load_model_config(args.model, args)
    target = storage.load(args.target)
    source = storage.load(args.source) if args.source else None
    report = evaluate(model, target, config, source=source)
    if args.out:
        report.save(args.out)
    else:
        print(report.to_json())
    return 0


def _record_rows(registry, command: str):
    if registry is None:
        return None

    def on_row(cell, row):
        registry.record_run(command, cell.config.to_dict(), dict(row), method=row['method'],
                            corruption=row['corruption'], noise_level=row['noise_level'])
    return on_row


def cmd_sweep(args) -> int:
    config, spec = load_config_file(args.config, args.overrides, args.seed)
    on_row = _record_rows(open_registry(args.registry), 'sweep')
    if args.parameter:
        if not args.values:
            raise UsageError("--parameter needs --values")
        frame = run_sensitivity(config, spec, args.parameter, args.values, args.repeats,
                                output_path=args.out, workers=args.workers, on_row=on_row)
        summary = summarize(frame, by=('parameter', 'value'))
    else:
        frame = sweep(config, spec, args.levels, args.kinds, args.repeats,
                      output_path=args.out, workers=args.workers, on_row=on_row)
        summary = summarize(frame)
    _print_json({'output': args.out, 'rows': len(frame), 'summary': summary.to_dict(orient='records')})
    return 0


def cmd_ablate(args) -> int:
    config, spec = load_config_file(args.config, args.overrides, args.seed)
    on_row = _record_rows(open_registry(args.registry), 'ablate')
    frame = run_ablation(config, spec, args.repeats, output_path=args.out, workers=args.workers, on_row=on_row)
    _print_json({'output': args.out, 'rows': len(frame),
                 'summary': summarize(frame, by=('method',)).to_dict(orient='records')})
    return 0


def cmd_export_embeddings(args) -> int:
    _require_files(args.model, args.source, args.target)
    model, config = _load_model_config(args.model, args)
    source = storage.load(args.source)
    target = storage.load(args.target)
    weights = None
    if config.noise_removal:
        weights, _ = compute_weights(model, source, config.eta, config.em_max_iter, config.em_tol)
    path = export_embeddings(model, [source, target], args.out, source_weights=weights)
    _print_json({'output': str(path), 'rows': source.n_samples + target.n_samples})
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    suite = run_gradcheck(states=args.states, h=args.step, tol=args.tol, seed=seed, checks=args.checks)
    _print_json(suite.to_dict())
    if not suite.passed:
        logger.error(f"Gradient checks failed: {', '.join(suite.failures)}")
        return 1
    return 0


def cmd_runs(args) -> int:
    registry = open_registry(args.registry)
    if registry is None:
        raise ConfigurationError("no run registry configured (set NTDA_DATABASE_URL or pass --registry)")
    _print_json(registry.list_runs(limit=args.limit, command=args.filter_command))
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'train': cmd_train,
    'eval': cmd_eval,
    'sweep': cmd_sweep,
    'ablate': cmd_ablate,
    'export-embeddings': cmd_export_embeddings,
    'gradcheck': cmd_gradcheck,
    'runs': cmd_runs,
}


@handle_errors()
def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    ok, problems = Config.validate()
    if not ok:
        raise ConfigurationError('; '.join(problems))
    logger.debug(f"Running {args.command} with {vars(args)}")
    return COMMANDS[args.command](args)


if __name__ == '__main__':
    sys.exit(main())
