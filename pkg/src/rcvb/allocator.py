"""Instrumented memory accounting for the training engine.

Every tensor the engine creates registers its byte size here, tagged with a
category (param, moment, activation, activation_grad, param_grad, loss).
The tracker keeps the live total, the high-water mark, and a per-category
breakdown captured at the moment the peak was set. A ceiling can be armed;
an allocation that would cross it raises OutOfBudgetMemory without changing
any counters, so the failure is recoverable.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

from .errors import OutOfBudgetMemory

CATEGORIES = ("param", "moment", "activation", "activation_grad", "param_grad", "loss")


@dataclass
class AllocatorStats:
    live_bytes: int = 0
    peak_bytes: int = 0
    peak_breakdown: dict = field(default_factory=dict)


class MemoryTracker:
    """Byte counter with an optional hard ceiling and free-on-exit scopes."""

    def __init__(self):
        self.live_bytes = 0
        self.peak_bytes = 0
        self._by_category = {c: 0 for c in CATEGORIES}
        self._peak_breakdown = dict(self._by_category)
        self._ceiling = None
        self._scopes = []

    # -- accounting -----------------------------------------------------
    def alloc(self, nbytes: int, category: str = "activation") -> None:
        if nbytes < 0:
            raise ValueError("nbytes must be non-negative")
        if category not in self._by_category:
            raise ValueError(f"unknown category {category!r}")
        if self._ceiling is not None and self.live_bytes + nbytes > self._ceiling:
            raise OutOfBudgetMemory(nbytes, self.live_bytes, self._ceiling)
        self.live_bytes += nbytes
        self._by_category[category] += nbytes
        if self.live_bytes > self.peak_bytes:
            self.peak_bytes = self.live_bytes
            self._peak_breakdown = dict(self._by_category)

    def release(self, nbytes: int, category: str = "activation") -> None:
        self.live_bytes -= nbytes
        self._by_category[category] -= nbytes
        if self.live_bytes < 0:
            raise RuntimeError("released more bytes than were allocated")

    def reset_peak(self) -> None:
        self.peak_bytes = self.live_bytes
        self._peak_breakdown = dict(self._by_category)

    def stats(self) -> AllocatorStats:
        return AllocatorStats(self.live_bytes, self.peak_bytes, dict(self._peak_breakdown))

    def live_by_category(self, category: str) -> int:
        return self._by_category[category]

    def peak_attributed(self, *categories: str) -> int:
        """Bytes the given categories held at the moment the peak was set."""
        return sum(self._peak_breakdown.get(c, 0) for c in categories)

    # -- ceiling --------------------------------------------------------
    def arm(self, ceiling: int) -> None:
        if ceiling < 0:
            raise ValueError("ceiling must be non-negative")
        self._ceiling = ceiling

    def disarm(self) -> None:
        self._ceiling = None

    @property
    def ceiling(self):
        return self._ceiling

    @contextmanager
    def armed(self, ceiling: int):
        previous = self._ceiling
        self.arm(ceiling)
        try:
            yield self
        finally:
            self._ceiling = previous

    # -- scopes ---------------------------------------------------------
    def attach(self, tensor) -> None:
        """Register a tensor with the innermost open scope, if any."""
        if self._scopes:
            self._scopes[-1].append(tensor)

    @contextmanager
    def scope(self):
        """Free every tensor created inside the block, even on error."""
        registered = []
        self._scopes.append(registered)
        try:
            yield registered
        finally:
            self._scopes.pop()
            for t in reversed(registered):
                t.free()
