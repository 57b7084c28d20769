"""Transition storage: a FIFO ring buffer with uniform batch sampling.

A generation writes whole batches of rollout transitions; trainers then read
uniform mini-batches. Writing and reading never overlap inside a generation,
so the buffer needs no locking. Transitions carrying non-finite values are
dropped (and counted) rather than poisoning later arithmetic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBufferError, ShapeError


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: float
    done: bool
    source: int = 0  # diagnostic tag only; trainers never read it


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return self.r.shape[0]


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ShapeError("capacity must be positive")
        self.capacity = capacity
        self._s = np.empty((capacity, state_dim))
        self._a = np.empty((capacity, action_dim))
        self._s_next = np.empty((capacity, state_dim))
        self._r = np.empty(capacity)
        self._done = np.empty(capacity, dtype=bool)
        self._source = np.zeros(capacity, dtype=np.int16)
        self._cursor = 0
        self.size = 0
        self.dropped = 0
        self.total_pushed = 0

    def push_arrays(self, s, a, s_next, r, done, source: int = 0) -> None:
        """Append rows in order, evicting oldest-first once full."""
        s, a, s_next = np.atleast_2d(s), np.atleast_2d(a), np.atleast_2d(s_next)
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        done = np.atleast_1d(np.asarray(done, dtype=bool))
        if s.shape[1] != self._s.shape[1] or a.shape[1] != self._a.shape[1]:
            raise ShapeError("transition dims do not match the buffer layout")
        ok = (np.isfinite(s).all(axis=1) & np.isfinite(a).all(axis=1)
              & np.isfinite(s_next).all(axis=1) & np.isfinite(r))
        if not ok.all():
            self.dropped += int((~ok).sum())
            s, a, s_next, r, done = s[ok], a[ok], s_next[ok], r[ok], done[ok]
        n = r.shape[0]
        for start in range(0, n, self.capacity):
            chunk = slice(start, min(start + self.capacity, n))
            self._write(s[chunk], a[chunk], s_next[chunk], r[chunk],
                        done[chunk], source)
        self.total_pushed += n

    def _write(self, s, a, s_next, r, done, source):
        n = r.shape[0]
        first = min(n, self.capacity - self._cursor)
        sls = slice(self._cursor, self._cursor + first)
        self._s[sls], self._a[sls], self._s_next[sls] = s[:first], a[:first], s_next[:first]
        self._r[sls], self._done[sls] = r[:first], done[:first]
        self._source[sls] = source
        rest = n - first
        if rest:
            self._s[:rest], self._a[:rest], self._s_next[:rest] = s[first:], a[first:], s_next[first:]
            self._r[:rest], self._done[:rest] = r[first:], done[first:]
            self._source[:rest] = source
        self._cursor = (self._cursor + n) % self.capacity
        self.size = min(self.size + n, self.capacity)

    def push(self, transitions) -> None:
        """Append a sequence of Transition records."""
        rows = list(transitions)
        if not rows:
            return
        for t in rows:
            self.push_arrays(t.s, t.a, t.s_next, t.r, t.done, t.source)

    def push_trajectory(self, traj, source: int = 0) -> None:
        self.push_arrays(traj.states, traj.actions, traj.next_states,
                         traj.rewards, traj.dones, source)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """n uniform draws with replacement; never mutates the buffer."""
        if self.size == 0:
            raise EmptyBufferError("replay buffer is empty")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self._s[idx], self._a[idx], self._s_next[idx],
                     self._r[idx], self._done[idx])

    def contents(self) -> Batch:
        """All stored transitions, oldest first (test/inspection helper)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = np.arange(self.capacity)
            order = np.concatenate([order[self._cursor:], order[:self._cursor]])
        return Batch(self._s[order], self._a[order], self._s_next[order],
                     self._r[order], self._done[order])
