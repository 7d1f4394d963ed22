"""Package logger plus the `time_and_memory` decorator used around loading, generation and CLI commands."""
from __future__ import annotations

import functools
import logging
import time
from typing import Any, Callable, Optional, Union

import psutil

LOG_FORMAT = "[%(asctime)s] %(levelname)s - %(module)s - %(filename)s - %(funcName)s - %(message)s"
_MIB = 1024.0 * 1024.0

logger = logging.getLogger("dualkoord")
if not logger.handlers:
    # applications may replace this handler
    _handler = logging.StreamHandler()
    _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(_handler)
    logger.setLevel(logging.INFO)


def set_log_level(level: Union[str, int]) -> None:
    """Set the `dualkoord` logger level from a name (``"debug"``) or a number; unknown names mean INFO."""
    if isinstance(level, int):
        logger.setLevel(level)
        return
    value = logging.getLevelName(str(level).upper())
    logger.setLevel(value if isinstance(value, int) else logging.INFO)


def _rss() -> Optional[int]:
    try:
        return psutil.Process().memory_info().rss
    except psutil.Error:
        return None


def time_and_memory(log: Optional[Callable[[str], None]] = None, label: Optional[str] = None):
    """Log wall time and resident memory of every call of the decorated function.

    Args:
        log: callable receiving the message; the `dualkoord` logger (INFO) is used when omitted or
            when the callable itself raises.
        label: name used in the message, defaults to the function name.

    A call that raises is still reported, as ``<label> failed after ...``.
    """
    def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
        name = label or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            rss_before = _rss()
            start = time.perf_counter()
            outcome = "took"
            try:
                return func(*args, **kwargs)
            except BaseException:
                outcome = "failed after"
                raise
            finally:
                elapsed = time.perf_counter() - start
                rss_after = _rss()
                msg = f"{name} {outcome} {elapsed:.6f}s"
                if rss_before is not None and rss_after is not None:
                    msg += (f", rss {rss_before / _MIB:.1f} -> {rss_after / _MIB:.1f} MiB "
                            f"({(rss_after - rss_before) / _MIB:+.1f})")
                _emit(log, msg)

        return wrapper

    return decorator


def _emit(log: Optional[Callable[[str], None]], msg: str) -> None:
    if log is not None:
        try:
            log(msg)
            return
        except Exception:
            pass
    logger.info(msg)
