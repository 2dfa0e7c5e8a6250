"""Timed PASS/FAIL bookkeeping for the acceptance criteria."""
from __future__ import annotations

import sys
import time
from contextlib import contextmanager

RESULTS: list[str] = []


@contextmanager
def criterion(number: int, title: str, limit_s: float):
    """Time the block; record and print one PASS/FAIL line, failing on overrun."""
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        _emit(f"FAIL criterion {number}: {title} ({elapsed:.2f}s; {type(exc).__name__}: {exc})".splitlines()[0])
        raise
    elapsed = time.perf_counter() - start
    if elapsed >= limit_s:
        _emit(f"FAIL criterion {number}: {title} ({elapsed:.2f}s exceeds {limit_s:g}s)")
        raise AssertionError(f"criterion {number} took {elapsed:.2f}s, limit {limit_s:g}s")
    _emit(f"PASS criterion {number}: {title} ({elapsed:.2f}s, limit {limit_s:g}s)")


def _emit(line: str) -> None:
    RESULTS.append(line)
    print(line, file=sys.stderr)
