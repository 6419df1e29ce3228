"""
Progress tracking for long Monte Carlo runs
"""

import time
import uuid
from django.core.cache import cache
from typing import Dict, Any, Optional
import logging

logger = logging.getLogger(__name__)

PROGRESS_TIMEOUT = 1800


class RunProgress:
    """Progress of a scenario run, kept in the cache under progress_<run_id>"""

    def __init__(self, run_id: Optional[str] = None, total_steps: int = 100, echo=None):
        self.run_id = run_id or str(uuid.uuid4())
        self.total_steps = max(1, total_steps)
        self.current_step = 0
        self.status = "Initializing..."
        self.stage = "0/0"
        self.completed = False
        self.error_message = None
        self.start_time = time.time()
        # optional callable receiving one status line per percent step
        self.echo = echo
        self._last_percent = -1

    def update(self, step: int, status: str, stage: Optional[str] = None, error: Optional[str] = None) -> Dict[str, Any]:
        self.current_step = min(step, self.total_steps)
        self.status = status
        if stage:
            self.stage = stage
        if error:
            self.error_message = error
            self.completed = True

        progress = int((self.current_step / self.total_steps) * 100)
        elapsed_time = time.time() - self.start_time
        if self.current_step > 0:
            estimated_total = elapsed_time * (self.total_steps / self.current_step)
            estimated_remaining = max(0, int(estimated_total - elapsed_time))
        else:
            estimated_remaining = None

        progress_data = {
            'run_id': self.run_id,
            'progress': progress,
            'status': self.status,
            'stage': self.stage,
            'error': self.error_message,
            'completed': self.completed or progress >= 100,
            'elapsed_time': int(elapsed_time),
            'estimated_remaining': estimated_remaining,
        }
        cache.set(f'progress_{self.run_id}', progress_data, timeout=PROGRESS_TIMEOUT)

        if self.echo is not None and progress != self._last_percent:
            self._last_percent = progress
            self.echo(f"[{progress:3d}%] {self.stage} {self.status}")
        return progress_data

    def complete(self, status: str = "Complete!") -> Dict[str, Any]:
        self.completed = True
        return self.update(self.total_steps, status)

    def set_error(self, error_message: str) -> Dict[str, Any]:
        logger.error(f"Run {self.run_id} failed: {error_message}")
        return self.update(self.current_step, f"Error: {error_message}", error=error_message)

    @classmethod
    def get_progress(cls, run_id: str) -> Optional[Dict[str, Any]]:
        return cache.get(f'progress_{run_id}')

    @classmethod
    def cleanup_progress(cls, run_id: str):
        cache.delete(f'progress_{run_id}')
