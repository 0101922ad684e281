"""PDMP state, event records and the skeleton container."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np


class Mode(enum.IntEnum):
    TEMPERING = 0
    TARGET = 1
    UNTEMPERED = 2


class EventKind(enum.IntEnum):
    INITIAL = 0
    FINAL = 1
    FLIP_X = 2
    FLIP_BETA = 3
    HIT_BETA_ONE = 4
    EXIT_BETA_ONE = 5
    REFLECT_BETA_ZERO = 6
    REFLECT_BETA_ONE = 7
    STICK = 8
    UNSTICK = 9

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    EventKind.INITIAL: "Initial",
    EventKind.FINAL: "Final",
    EventKind.FLIP_X: "FlipX",
    EventKind.FLIP_BETA: "FlipBeta",
    EventKind.HIT_BETA_ONE: "HitBetaOne",
    EventKind.EXIT_BETA_ONE: "ExitBetaOne",
    EventKind.REFLECT_BETA_ZERO: "ReflectBetaZero",
    EventKind.REFLECT_BETA_ONE: "ReflectBetaOne",
    EventKind.STICK: "Stick",
    EventKind.UNSTICK: "Unstick",
}

_COORDINATE_KINDS = (EventKind.FLIP_X, EventKind.STICK, EventKind.UNSTICK)


class StateError(ValueError):
    """Raised when a state violates its invariants."""


@dataclass(frozen=True, eq=False)
class ExtendedState:
    """Full PDMP state ``z = (x, beta, v, v_beta)`` plus mode and stuck mask.

    ``v`` always holds the retained +/-1 velocity; a stuck coordinate keeps
    its velocity but the flow does not move it. For ``Mode.UNTEMPERED``
    the temperature fields are NaN/0 and ignored.
    """

    x: np.ndarray
    v: np.ndarray
    beta: float = float("nan")
    v_beta: int = 0
    mode: Mode = Mode.UNTEMPERED
    stuck: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=1)
        v = np.array(self.v, dtype=np.int8, ndmin=1)
        if x.ndim != 1 or v.shape != x.shape:
            raise StateError("x and v must be vectors of equal length")
        stuck = (
            np.zeros(x.shape, dtype=bool)
            if self.stuck is None
            else np.array(self.stuck, dtype=bool, ndmin=1)
        )
        if stuck.shape != x.shape:
            raise StateError("stuck mask must match the dimension of x")
        if np.any(np.abs(v) > 1):
            raise StateError("velocities must lie in {-1, 0, +1}")
        if np.any(x[stuck] != 0.0):
            raise StateError("stuck coordinates must sit at exactly zero")
        mode = Mode(self.mode)
        beta = float(self.beta)
        v_beta = int(self.v_beta)
        if mode is Mode.TARGET and not (beta == 1.0 and v_beta == 0):
            raise StateError("target mode requires beta = 1 and v_beta = 0")
        if mode is Mode.TEMPERING:
            if not 0.0 <= beta <= 1.0 or v_beta not in (-1, 1):
                raise StateError("tempering mode requires beta in [0, 1] and v_beta = +/-1")
        for arr in (x, v, stuck):
            arr.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "stuck", stuck)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "v_beta", v_beta)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    @property
    def effective_velocity(self) -> np.ndarray:
        return np.where(self.stuck, 0, self.v).astype(float)

    def replace(self, **changes) -> ExtendedState:
        fields = dict(
            x=self.x, v=self.v, beta=self.beta, v_beta=self.v_beta,
            mode=self.mode, stuck=self.stuck,
        )
        fields.update(changes)
        return ExtendedState(**fields)

    def __eq__(self, other):
        if not isinstance(other, ExtendedState):
            return NotImplemented
        same_beta = self.beta == other.beta or (np.isnan(self.beta) and np.isnan(other.beta))
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.stuck, other.stuck)
            and same_beta
            and self.v_beta == other.v_beta
            and self.mode == other.mode
        )

    def __repr__(self):
        return (
            f"ExtendedState(x={self.x.tolist()}, v={self.v.tolist()}, beta={self.beta}, "
            f"v_beta={self.v_beta}, mode={self.mode.name}, stuck={self.stuck.tolist()})"
        )


class SkeletonEvent(NamedTuple):
    t: float
    state: ExtendedState
    kind: EventKind
    index: int = -1  # coordinate for FlipX / Stick / Unstick

    @property
    def label(self) -> str:
        if self.kind in _COORDINATE_KINDS:
            return f"{self.kind.label}({self.index})"
        return self.kind.label


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Columnar record of post-event states.

    Row ``k`` holds the state immediately after event ``k``; the path between
    rows ``k`` and ``k + 1`` is the linear flow from row ``k``.
    """

    t: np.ndarray
    kind: np.ndarray
    index: np.ndarray
    x: np.ndarray
    v: np.ndarray
    beta: np.ndarray
    v_beta: np.ndarray
    mode: np.ndarray
    stuck: np.ndarray
    proposal_count: int = 0
    accepted_count: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.accepted_count > self.proposal_count:
            raise StateError("accepted_count cannot exceed proposal_count")
        if len(self.t) < 2 or self.kind[0] != EventKind.INITIAL or self.kind[-1] != EventKind.FINAL:
            raise StateError("a skeleton starts with Initial and ends with Final")

    @property
    def total_time(self) -> float:
        return float(self.t[-1])

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_events(self) -> int:
        """Number of events excluding the Initial and Final markers."""
        return len(self.t) - 2

    @property
    def thinning_efficiency(self) -> float:
        if self.proposal_count == 0:
            return float("nan")
        return self.accepted_count / self.proposal_count

    @property
    def effective_velocity(self) -> np.ndarray:
        return np.where(self.stuck, 0.0, self.v.astype(float))

    def state(self, k: int) -> ExtendedState:
        return ExtendedState(
            x=self.x[k], v=self.v[k], beta=self.beta[k], v_beta=int(self.v_beta[k]),
            mode=Mode(int(self.mode[k])), stuck=self.stuck[k],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> SkeletonEvent:
        if k < 0:
            k += len(self)
        return SkeletonEvent(
            float(self.t[k]), self.state(k), EventKind(int(self.kind[k])), int(self.index[k])
        )

    def __iter__(self) -> Iterator[SkeletonEvent]:
        for k in range(len(self)):
            yield self[k]

    @property
    def events(self) -> list[SkeletonEvent]:
        return list(self)

    def final_state(self) -> ExtendedState:
        return self.state(len(self) - 1)
