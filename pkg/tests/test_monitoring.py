import json
import logging

from core.errors import CellFailedError, ShapeError
from utils.decorators import handle_errors, log_performance
from utils.monitoring import Stopwatch, TrainingMonitor, configure_logging


class TestHandleErrors:

    def test_exit_codes_and_error_line(self, capsys):
        @handle_errors()
        def shape():
            raise ShapeError('2x3 against 4x1')

        @handle_errors()
        def crash():
            raise RuntimeError('boom')

        assert shape() == 1
        assert json.loads(capsys.readouterr().err) == {'error': 'shape_mismatch', 'message': '2x3 against 4x1'}
        assert crash() == 1
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])['error'] == 'internal'

    def test_cell_failure_names_partial_file(self, capsys):
        @handle_errors()
        def sweep():
            raise CellFailedError('00003:label@0.4:r1:ntda', 'RuntimeError: boom', 'out.csv')

        assert sweep() == 1
        message = json.loads(capsys.readouterr().err)['message']
        assert '00003:label@0.4:r1:ntda' in message and 'out.csv' in message

    def test_passes_return_value(self):
        assert handle_errors()(lambda: None)() == 0
        assert handle_errors()(lambda: 3)() == 3


class TestLogPerformance:

    def test_slow_call_warns(self, caplog):
        @log_performance(threshold_ms=-1)
        def work():
            return 'done'

        with caplog.at_level(logging.WARNING, logger='utils.decorators'):
            assert work() == 'done'
        assert any('SLOW CALL: work' in r.getMessage() for r in caplog.records)


class TestTrainingMonitor:

    def test_summary_per_phase(self):
        monitor = TrainingMonitor()
        monitor.record_epoch('warmup', 10.0, 4)
        monitor.record_epoch('warmup', 30.0, 4)
        monitor.record_epoch('adapt', 5.0, 2)
        monitor.record_warning()
        summary = monitor.get_summary()
        assert summary['phases']['warmup'] == {'epochs': 2, 'batches': 8, 'avg_epoch_ms': 20.0, 'max_epoch_ms': 30.0}
        assert summary['phases']['adapt']['batches'] == 2
        assert summary['warnings'] == 1
        assert 'rss_mb' in summary['system']['memory']

    def test_stopwatch(self):
        with Stopwatch() as watch:
            sum(range(1000))
        assert watch.elapsed_ms >= 0.0

    def test_configure_logging_single_handler(self):
        root = logging.getLogger()
        saved = list(root.handlers), root.level
        try:
            configure_logging('debug')
            configure_logging('warning')
            assert len(root.handlers) == 1
            assert root.level == logging.WARNING
        finally:
            root.handlers[:] = saved[0]
            root.setLevel(saved[1])
