"""Exclusive per-phase wall-clock accounting."""
from contextlib import contextmanager
import time


class PhaseTimer:
    """Charges elapsed time to the innermost active phase.

    Nested phases pause their parent, so phase totals never overlap and
    together with ``other`` they add up to :meth:`total`. Time spent inside
    the verification engine is tracked separately (it overlaps phases).
    """

    def __init__(self):
        self.totals = {}
        self.engine = 0.0
        self.engine_calls = 0
        self._stack = []
        self._mark = None
        self._start = time.perf_counter()
        self._stop = None

    def _charge(self, now):
        if self._stack:
            name = self._stack[-1]
            self.totals[name] = self.totals.get(name, 0.0) + now - self._mark
        else:
            self.totals["other"] = self.totals.get("other", 0.0) + now - self._mark

    @contextmanager
    def phase(self, name):
        now = time.perf_counter()
        if self._mark is not None:
            self._charge(now)
        else:
            self.totals["other"] = self.totals.get("other", 0.0) + now - self._start
        self._mark = now
        self._stack.append(name)
        try:
            yield
        finally:
            now = time.perf_counter()
            self._charge(now)
            self._stack.pop()
            self._mark = now

    @contextmanager
    def engine_call(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.engine += time.perf_counter() - t0
            self.engine_calls += 1

    def finish(self):
        now = time.perf_counter()
        if self._mark is None:
            self.totals["other"] = self.totals.get("other", 0.0) + now - self._start
        else:
            self._charge(now)
        self._mark = now
        self._stop = now

    def total(self):
        end = self._stop if self._stop is not None else time.perf_counter()
        return end - self._start

    def report(self, phases=()):
        out = {p: self.totals.get(p, 0.0) for p in phases}
        for k, v in self.totals.items():
            out.setdefault(k, v)
        out.setdefault("other", 0.0)
        out["total"] = self.total()
        out["engine"] = self.engine
        out["engine_fraction"] = self.engine / out["total"] if out["total"] > 0 else 0.0
        return out
