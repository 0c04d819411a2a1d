"""
Training monitoring: epoch timings, batch counts and process resource usage
"""
import logging
import sys
import threading
import time
from collections import defaultdict, deque
from datetime import datetime, timezone
from typing import Any, Dict

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'


def configure_logging(level: str = 'INFO') -> None:
    """Install a single stderr handler on the root logger"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))


class TrainingMonitor:
    """Collects per-phase epoch timings"""

    def __init__(self, max_samples: int = 1000):
        self.max_samples = max_samples
        self.epoch_times = defaultdict(lambda: deque(maxlen=max_samples))
        self.batches = defaultdict(int)
        self.warnings = 0
        self.lock = threading.Lock()
        self.start_time = datetime.now(timezone.utc)

    def record_epoch(self, phase: str, duration_ms: float, batches: int):
        with self.lock:
            self.epoch_times[phase].append(duration_ms)
            self.batches[phase] += batches

    def record_warning(self):
        with self.lock:
            self.warnings += 1

    def get_summary(self) -> Dict[str, Any]:
        with self.lock:
            uptime = (datetime.now(timezone.utc) - self.start_time).total_seconds()
            phases = {}
            for phase, times in self.epoch_times.items():
                phases[phase] = {
                    'epochs': len(times),
                    'batches': self.batches[phase],
                    'avg_epoch_ms': round(sum(times) / len(times), 2) if times else 0,
                    'max_epoch_ms': round(max(times), 2) if times else 0,
                }
            return {
                'uptime_seconds': round(uptime, 3),
                'phases': phases,
                'warnings': self.warnings,
                'system': {
                    'memory': SystemMonitor.get_memory_usage(),
                    'cpu': SystemMonitor.get_cpu_usage(),
                },
            }


class SystemMonitor:
    """Monitors system resources"""

    @staticmethod
    def get_memory_usage() -> Dict[str, Any]:
        try:
            import psutil
            process = psutil.Process()
            memory_info = process.memory_info()
            return {
                'rss_mb': round(memory_info.rss / 1024 / 1024, 2),
                'vms_mb': round(memory_info.vms / 1024 / 1024, 2),
                'percent': round(process.memory_percent(), 2),
            }
        except ImportError:
            return {'error': 'psutil not available'}

    @staticmethod
    def get_cpu_usage() -> Dict[str, Any]:
        try:
            import psutil
            process = psutil.Process()
            times = process.cpu_times()
            return {
                'user_seconds': round(times.user, 3),
                'system_seconds': round(times.system, 3),
                'num_threads': process.num_threads(),
            }
        except ImportError:
            return {'error': 'psutil not available'}


class Stopwatch:
    """Context manager measuring wall-clock milliseconds"""

    def __enter__(self):
        self.start = time.perf_counter()
        self.elapsed_ms = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed_ms = (time.perf_counter() - self.start) * 1000
        return False
