"""Dual-view experience replay and expert demonstration storage.

Each stored transition carries the privileged state ``s`` and the paired noisy
observation ``o``. A minibatch therefore exposes an index-aligned teacher view
``(s, a, r, s', done)`` and student view ``(o, a, r, o', done)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .envs import EnvSpec, observe, within_noise_box
from .errors import ErrorCode, TeachLoopError

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 1_000_000
_INITIAL_ALLOCATION = 4096


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    o: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    o_next: np.ndarray
    done: bool
    alpha_at_collection: float = 0.0


@dataclass(frozen=True)
class BatchView:
    inputs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_inputs: np.ndarray
    dones: np.ndarray


@dataclass
class Minibatch:
    """Index-aligned privileged and observed views of sampled transitions."""

    indices: np.ndarray
    s: np.ndarray
    o: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    o_next: np.ndarray
    done: np.ndarray
    alpha: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def __getitem__(self, i: int) -> Transition:
        return Transition(
            s=self.s[i],
            o=self.o[i],
            a=self.a[i],
            r=float(self.r[i]),
            s_next=self.s_next[i],
            o_next=self.o_next[i],
            done=bool(self.done[i]),
            alpha_at_collection=float(self.alpha[i]),
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]

    @property
    def teacher_view(self) -> BatchView:
        return BatchView(self.s, self.a, self.r, self.s_next, self.done)

    @property
    def student_view(self) -> BatchView:
        return BatchView(self.o, self.a, self.r, self.o_next, self.done)

    def with_rewards(self, rewards: np.ndarray) -> "Minibatch":
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        if rewards.shape[0] != len(self):
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"Got {rewards.shape[0]} rewards for a minibatch of {len(self)}.",
            )
        return Minibatch(
            indices=self.indices,
            s=self.s,
            o=self.o,
            a=self.a,
            r=rewards,
            s_next=self.s_next,
            o_next=self.o_next,
            done=self.done,
            alpha=self.alpha,
        )

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> "Minibatch":
        if not transitions:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "Cannot build a minibatch from zero transitions.")
        return cls(
            indices=np.arange(len(transitions)),
            s=np.stack([np.asarray(t.s, dtype=np.float64) for t in transitions]),
            o=np.stack([np.asarray(t.o, dtype=np.float64) for t in transitions]),
            a=np.stack([np.asarray(t.a, dtype=np.float64).reshape(-1) for t in transitions]),
            r=np.array([float(t.r) for t in transitions]),
            s_next=np.stack([np.asarray(t.s_next, dtype=np.float64) for t in transitions]),
            o_next=np.stack([np.asarray(t.o_next, dtype=np.float64) for t in transitions]),
            done=np.array([bool(t.done) for t in transitions]),
            alpha=np.array([float(t.alpha_at_collection) for t in transitions]),
        )


class ReplayBuffer:
    """FIFO ring of transitions stored column-wise in float64 arrays.

    Storage grows by doubling up to ``capacity`` so that small runs never pay
    for the full default capacity.
    """

    def __init__(
        self,
        capacity: int,
        state_dim: int,
        action_dim: int,
        action_low: float = -1.0,
        action_high: float = 1.0,
    ) -> None:
        if capacity < 1:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Replay capacity must be >= 1, got {capacity}.")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.action_low = float(action_low)
        self.action_high = float(action_high)
        self.cursor = 0
        self.size = 0
        self.push_count = 0
        self._allocate(min(self.capacity, _INITIAL_ALLOCATION))

    @classmethod
    def for_env(cls, spec: EnvSpec, capacity: int = DEFAULT_CAPACITY) -> "ReplayBuffer":
        return cls(capacity, spec.state_dim, spec.action_dim, spec.action_low, spec.action_high)

    def __len__(self) -> int:
        return self.size

    def _allocate(self, rows: int) -> None:
        n, m = self.state_dim, self.action_dim
        self._s = np.zeros((rows, n))
        self._o = np.zeros((rows, n))
        self._a = np.zeros((rows, m))
        self._r = np.zeros(rows)
        self._s_next = np.zeros((rows, n))
        self._o_next = np.zeros((rows, n))
        self._done = np.zeros(rows, dtype=bool)
        self._alpha = np.zeros(rows)

    def _grow(self) -> None:
        rows = self._r.shape[0]
        new_rows = min(self.capacity, rows * 2)
        for name in ("_s", "_o", "_a", "_r", "_s_next", "_o_next", "_done", "_alpha"):
            old = getattr(self, name)
            fresh = np.zeros((new_rows,) + old.shape[1:], dtype=old.dtype)
            fresh[:rows] = old
            setattr(self, name, fresh)

    def validate(self, t: Transition) -> None:
        """Reject transitions that break shape, finiteness, bounds or noise-box rules."""

        n, m = self.state_dim, self.action_dim
        vectors = {"s": (t.s, n), "o": (t.o, n), "s_next": (t.s_next, n), "o_next": (t.o_next, n), "a": (t.a, m)}
        for label, (value, dim) in vectors.items():
            arr = np.asarray(value, dtype=np.float64).reshape(-1)
            if arr.shape[0] != dim:
                raise TeachLoopError(
                    ErrorCode.DIMENSION_ERROR,
                    f"Transition field '{label}' has {arr.shape[0]} entries, expected {dim}.",
                )
            if not np.all(np.isfinite(arr)):
                raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Transition field '{label}' is not finite.")

        if not np.isfinite(t.r):
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Transition reward {t.r} is not finite.")

        a = np.asarray(t.a, dtype=np.float64)
        if np.any(a < self.action_low) or np.any(a > self.action_high):
            raise TeachLoopError(
                ErrorCode.INVALID_INPUT,
                f"Transition action {a.tolist()} outside [{self.action_low}, {self.action_high}].",
            )

        alpha = float(t.alpha_at_collection)
        if alpha < 0.0:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, f"alpha_at_collection must be >= 0, got {alpha}.")
        for state, obs, label in ((t.s, t.o, "o"), (t.s_next, t.o_next, "o_next")):
            if not within_noise_box(state, obs, alpha):
                raise TeachLoopError(
                    ErrorCode.INVALID_INPUT,
                    f"Observation '{label}' deviates from its state by more than alpha*|s| (alpha={alpha}).",
                    hint="Observations must be produced by envs.observe at the recorded alpha.",
                )

    def push(self, t: Transition) -> None:
        self.validate(t)
        if self.size == self._r.shape[0] and self.size < self.capacity:
            self._grow()

        i = self.cursor
        self._s[i] = np.asarray(t.s, dtype=np.float64).reshape(-1)
        self._o[i] = np.asarray(t.o, dtype=np.float64).reshape(-1)
        self._a[i] = np.asarray(t.a, dtype=np.float64).reshape(-1)
        self._r[i] = float(t.r)
        self._s_next[i] = np.asarray(t.s_next, dtype=np.float64).reshape(-1)
        self._o_next[i] = np.asarray(t.o_next, dtype=np.float64).reshape(-1)
        self._done[i] = bool(t.done)
        self._alpha[i] = float(t.alpha_at_collection)

        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.push_count += 1

    def _chronological_slots(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self.cursor) % self.capacity

    def transition(self, slot: int) -> Transition:
        return Transition(
            s=self._s[slot].copy(),
            o=self._o[slot].copy(),
            a=self._a[slot].copy(),
            r=float(self._r[slot]),
            s_next=self._s_next[slot].copy(),
            o_next=self._o_next[slot].copy(),
            done=bool(self._done[slot]),
            alpha_at_collection=float(self._alpha[slot]),
        )

    def transitions(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""

        return [self.transition(int(slot)) for slot in self._chronological_slots()]

    def noise_box_violations(self) -> list[int]:
        bad: list[int] = []
        for slot in range(self.size):
            alpha = self._alpha[slot]
            if not (
                within_noise_box(self._s[slot], self._o[slot], alpha)
                and within_noise_box(self._s_next[slot], self._o_next[slot], alpha)
            ):
                bad.append(slot)
        return bad

    def gather(self, slots: np.ndarray) -> Minibatch:
        return Minibatch(
            indices=slots,
            s=self._s[slots],
            o=self._o[slots],
            a=self._a[slots],
            r=self._r[slots],
            s_next=self._s_next[slots],
            o_next=self._o_next[slots],
            done=self._done[slots],
            alpha=self._alpha[slots],
        )


def push(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def sample_minibatch(
    buf: ReplayBuffer,
    n: int,
    rng: np.random.Generator,
    student_alpha: float | None = None,
) -> Minibatch:
    """Uniform sample with replacement.

    With ``student_alpha`` set, the student view is re-noised from the stored
    privileged states at that level; ``alpha`` then reports the new level.
    """

    if buf.size < 1:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, "Cannot sample from an empty replay buffer.")
    if n < 1:
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Minibatch size must be >= 1, got {n}.")

    slots = rng.integers(0, buf.size, size=int(n))
    batch = buf.gather(slots)
    if student_alpha is not None:
        batch.o = observe(batch.s, student_alpha, rng)
        batch.o_next = observe(batch.s_next, student_alpha, rng)
        batch.alpha = np.full(len(batch), float(student_alpha))
    return batch


@dataclass
class ExpertBuffer:
    """Expert ``(s*, a*)`` pairs plus the row index where each episode starts."""

    states: np.ndarray
    actions: np.ndarray
    episode_starts: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2 or self.states.shape[0] != self.actions.shape[0]:
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"Expert states {self.states.shape} and actions {self.actions.shape} are not aligned.",
            )

    def __len__(self) -> int:
        return int(self.states.shape[0])

    @property
    def state_dim(self) -> int:
        return int(self.states.shape[1])

    @property
    def action_dim(self) -> int:
        return int(self.actions.shape[1])

    def episodes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        bounds = list(self.episode_starts) + [len(self)]
        return [(self.states[lo:hi], self.actions[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def require_nonempty(self) -> None:
        if len(self) == 0:
            raise TeachLoopError(
                ErrorCode.INVALID_INPUT,
                "Expert buffer is empty.",
                hint="Generate demonstrations with `teachloop gen-demos` first.",
            )

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        self.require_nonempty()
        rows = rng.integers(0, len(self), size=int(n))
        return self.states[rows], self.actions[rows]

    @classmethod
    def from_episodes(cls, episodes: list[tuple[np.ndarray, np.ndarray]]) -> "ExpertBuffer":
        if not episodes:
            raise TeachLoopError(ErrorCode.INVALID_INPUT, "Expert buffer needs at least one episode.")
        starts: list[int] = []
        offset = 0
        for states, _ in episodes:
            starts.append(offset)
            offset += len(states)
        return cls(
            states=np.concatenate([np.asarray(s, dtype=np.float64) for s, _ in episodes]),
            actions=np.concatenate([np.asarray(a, dtype=np.float64).reshape(len(a), -1) for _, a in episodes]),
            episode_starts=starts,
        )


def _parse_header(line: str, path: Path) -> tuple[int, int]:
    fields: dict[str, int] = {}
    for part in line.strip().split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"{path}: line 1: malformed header '{line.strip()}'.",
                hint="Expected 'state_dim=<n>,action_dim=<m>'.",
            )
        try:
            fields[key.strip()] = int(value.strip())
        except ValueError as exc:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"{path}: line 1: header value for '{key.strip()}' is not an integer.",
            ) from exc
    if set(fields) != {"state_dim", "action_dim"} or min(fields.values()) < 1:
        raise TeachLoopError(
            ErrorCode.PARSE_ERROR,
            f"{path}: line 1: header must declare positive state_dim and action_dim.",
        )
    return fields["state_dim"], fields["action_dim"]


def load_demonstrations(path: Path | str, spec: EnvSpec | None = None) -> ExpertBuffer:
    path = Path(path)
    if not path.exists():
        raise TeachLoopError(ErrorCode.INVALID_INPUT, f"Demonstration file not found: {path}")

    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].strip():
        raise TeachLoopError(ErrorCode.PARSE_ERROR, f"{path}: line 1: missing header.")
    state_dim, action_dim = _parse_header(lines[0], path)

    if spec is not None and (state_dim, action_dim) != (spec.state_dim, spec.action_dim):
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"{path} declares state_dim={state_dim},action_dim={action_dim}; "
            f"{spec.name} needs {spec.state_dim},{spec.action_dim}.",
        )

    rows: list[list[float]] = []
    starts: list[int] = []
    episode_open = False
    width = state_dim + action_dim
    for number, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text:
            episode_open = False
            continue
        parts = text.split(",")
        if len(parts) != width:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"{path}: line {number}: expected {width} values, found {len(parts)}.",
            )
        try:
            values = [float(part) for part in parts]
        except ValueError as exc:
            raise TeachLoopError(
                ErrorCode.PARSE_ERROR,
                f"{path}: line {number}: non-numeric value.",
                hint=str(exc),
            ) from exc
        if not all(np.isfinite(values)):
            raise TeachLoopError(ErrorCode.PARSE_ERROR, f"{path}: line {number}: non-finite value.")
        if not episode_open:
            starts.append(len(rows))
            episode_open = True
        rows.append(values)

    if not rows:
        raise TeachLoopError(ErrorCode.PARSE_ERROR, f"{path}: no demonstration rows after the header.")

    table = np.array(rows, dtype=np.float64)
    log.debug("Loaded %d demonstration pairs in %d episodes from %s", len(rows), len(starts), path)
    return ExpertBuffer(states=table[:, :state_dim], actions=table[:, state_dim:], episode_starts=starts)


def save_demonstrations(path: Path | str, demos: ExpertBuffer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"state_dim={demos.state_dim},action_dim={demos.action_dim}"]
    for index, (states, actions) in enumerate(demos.episodes()):
        if index:
            lines.append("")
        for s, a in zip(states, actions):
            lines.append(",".join(repr(float(v)) for v in np.concatenate([s, a])))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
