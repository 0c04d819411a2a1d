"""
Decorators for the command-line surface and training loop
Error-to-exit-code mapping and slow-call logging
"""
import functools
import json
import logging
import sys
import time
from typing import Callable

from core.errors import NTDAError

logger = logging.getLogger(__name__)


def emit_error(code: str, message: str) -> None:
    """One machine-parseable line on stderr"""
    print(json.dumps({'error': code, 'message': message}), file=sys.stderr)


def handle_errors():
    """Decorator for consistent CLI error handling; returns a process exit code"""
    def decorator(f: Callable) -> Callable:
        @functools.wraps(f)
        def decorated_function(*args, **kwargs) -> int:
            try:
                result = f(*args, **kwargs)
                return 0 if result is None else int(result)
            except NTDAError as e:
                emit_error(e.code, str(e))
                return e.exit_code
            except (ValueError, KeyError) as e:
                emit_error('invalid_input', str(e))
                return 2
            except OSError as e:
                emit_error('io_error', str(e))
                return 1
            except Exception as e:
                logger.exception(f"Unhandled error in {f.__name__}: {e}")
                emit_error('internal', f"{type(e).__name__}: {e}")
                return 1

        return decorated_function
    return decorator


def log_performance(threshold_ms: int = 1000):
    """Decorator to log slow calls"""
    def decorator(f: Callable) -> Callable:
        @functools.wraps(f)
        def decorated_function(*args, **kwargs):
            start_time = time.time()
            try:
                return f(*args, **kwargs)
            finally:
                duration = (time.time() - start_time) * 1000
                if duration > threshold_ms:
                    logger.warning(f"SLOW CALL: {f.__name__} took {duration:.2f}ms")

        return decorated_function
    return decorator
