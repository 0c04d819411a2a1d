"""
Worker pool for independent experiment cells.
Cells are queued with a priority, executed by worker threads and collected
by cell id, so result assembly does not depend on completion order.
"""
import logging
import queue
import threading
import time
import traceback
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class CellPriority(IntEnum):
    """Lower runs first"""
    HIGH = 1
    NORMAL = 2
    LOW = 3


@dataclass
class CellTask:
    cell_id: str
    func: Callable
    args: tuple = field(default_factory=tuple)
    kwargs: dict = field(default_factory=dict)
    priority: CellPriority = CellPriority.NORMAL
    created_at: float = field(default_factory=time.time)

    def __lt__(self, other):
        if self.priority != other.priority:
            return self.priority < other.priority
        return self.cell_id < other.cell_id


@dataclass
class CellOutcome:
    cell_id: str
    result: Any = None
    error: Optional[str] = None
    duration_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


class CellExecutor:
    """Runs submitted cells on ``num_workers`` threads; ``num_workers == 1`` runs inline in order"""

    def __init__(self, num_workers: int = 1, on_complete: Optional[Callable[[CellOutcome], None]] = None):
        self.num_workers = max(1, int(num_workers))
        self.on_complete = on_complete
        self.task_queue: 'queue.PriorityQueue[CellTask]' = queue.PriorityQueue()
        self.outcomes: Dict[str, CellOutcome] = {}
        self.lock = threading.Lock()
        self.stop_event = threading.Event()
        self.stats = {'cells_completed': 0, 'cells_failed': 0}

    def submit(self, cell_id: str, func: Callable, *args,
               priority: CellPriority = CellPriority.NORMAL, **kwargs) -> None:
        self.task_queue.put(CellTask(cell_id, func, args, kwargs, priority))

    def _execute(self, task: CellTask) -> CellOutcome:
        start = time.time()
        try:
            outcome = CellOutcome(task.cell_id, result=task.func(*task.args, **task.kwargs))
        except Exception as e:
            logger.error(f"Cell {task.cell_id} failed: {e}\n{traceback.format_exc()}")
            outcome = CellOutcome(task.cell_id, error=f"{type(e).__name__}: {e}")
        outcome.duration_ms = (time.time() - start) * 1000
        with self.lock:
            self.outcomes[task.cell_id] = outcome
            self.stats['cells_completed' if outcome.ok else 'cells_failed'] += 1
            if self.on_complete is not None:
                self.on_complete(outcome)
        if not outcome.ok:
            self.stop_event.set()
        return outcome

    def _worker_loop(self):
        while not self.stop_event.is_set():
            try:
                task = self.task_queue.get_nowait()
            except queue.Empty:
                return
            try:
                self._execute(task)
            finally:
                self.task_queue.task_done()

    def run(self, stop_on_error: bool = True) -> List[CellOutcome]:
        """Drain the queue; stops scheduling new cells after the first failure when asked to"""
        if not stop_on_error:
            self.stop_event = _NeverSet()
        if self.num_workers == 1:
            self._worker_loop()
        else:
            workers = [threading.Thread(target=self._worker_loop, name=f"CellWorker-{i}", daemon=True)
                       for i in range(self.num_workers)]
            for worker in workers:
                worker.start()
            for worker in workers:
                worker.join()
        logger.info(f"Cell executor finished: {self.stats['cells_completed']} completed, "
                    f"{self.stats['cells_failed']} failed")
        return [self.outcomes[k] for k in sorted(self.outcomes)]


class _NeverSet:
    def is_set(self) -> bool:
        return False

    def set(self):
        pass
