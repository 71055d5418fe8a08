"""Parameter tagging and immutable parameter snapshots."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Literal

import numpy as np

from segviz.core.errors import SnapshotMismatchError
from segviz.ndtensor import Tensor

RUNNING_STAT_SUFFIXES = (".running_mean", ".running_var")


@dataclass(frozen=True, order=True)
class BlockTag:
    """Which federation block a parameter belongs to."""

    kind: Literal["representation", "task"]
    task: str | None = None

    @classmethod
    def representation(cls) -> BlockTag:
        return cls("representation")

    @classmethod
    def for_task(cls, task: str) -> BlockTag:
        return cls("task", task)

    @property
    def is_representation(self) -> bool:
        return self.kind == "representation"

    def __str__(self) -> str:
        return "representation" if self.is_representation else f"task({self.task})"


@dataclass
class Parameter:
    """A named tensor owned by a model.

    Buffers (batch-norm running statistics) travel in snapshots but are never
    handed to the optimizer.
    """

    name: str
    tag: BlockTag
    tensor: Tensor
    is_buffer: bool = False


def is_running_stat(name: str) -> bool:
    return name.endswith(RUNNING_STAT_SUFFIXES)


@dataclass(frozen=True)
class TaskScope:
    task: str


Scope = Literal["all", "representation_only"] | TaskScope


def in_scope(tag: BlockTag, scope: Scope) -> bool:
    match scope:
        case "all":
            return True
        case "representation_only":
            return tag.is_representation
        case TaskScope(task=task):
            return tag == BlockTag.for_task(task)
    raise ValueError(f"unknown scope {scope!r}")


@dataclass(frozen=True)
class SnapshotEntry:
    name: str
    tag: BlockTag
    value: np.ndarray


class ParamSnapshot:
    """Ordered, immutable set of tagged parameter values.

    Entries are sorted by name and hold read-only copies, so a snapshot can be
    shared between workers and compared bit for bit.
    """

    __slots__ = ("_entries", "_index")

    def __init__(self, entries: Iterable[SnapshotEntry]):
        frozen = []
        for entry in sorted(entries, key=lambda e: e.name):
            value = np.array(entry.value, copy=True)
            value.flags.writeable = False
            frozen.append(SnapshotEntry(entry.name, entry.tag, value))
        self._entries: tuple[SnapshotEntry, ...] = tuple(frozen)
        self._index = {e.name: i for i, e in enumerate(self._entries)}
        if len(self._index) != len(self._entries):
            raise SnapshotMismatchError("snapshot parameter names must be unique")

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[SnapshotEntry]:
        return iter(self._entries)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> SnapshotEntry:
        try:
            return self._entries[self._index[name]]
        except KeyError:
            raise SnapshotMismatchError(f"snapshot has no parameter {name!r}") from None

    def names(self) -> list[str]:
        return [e.name for e in self._entries]

    def tasks(self) -> set[str]:
        return {e.tag.task for e in self._entries if not e.tag.is_representation}

    def select(self, scope: Scope) -> ParamSnapshot:
        return ParamSnapshot(e for e in self._entries if in_scope(e.tag, scope))

    def representation(self) -> ParamSnapshot:
        return self.select("representation_only")

    def task(self, name: str) -> ParamSnapshot:
        return self.select(TaskScope(name))

    def merge(self, other: ParamSnapshot) -> ParamSnapshot:
        """Union of two snapshots with disjoint names."""
        overlap = set(self._index) & set(other._index)
        if overlap:
            raise SnapshotMismatchError(f"cannot merge, names overlap: {sorted(overlap)[:3]}")
        return ParamSnapshot([*self._entries, *other._entries])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamSnapshot) or len(self) != len(other):
            return False
        return all(
            a.name == b.name
            and a.tag == b.tag
            and a.value.dtype == b.value.dtype
            and a.value.shape == b.value.shape
            and a.value.tobytes() == b.value.tobytes()
            for a, b in zip(self._entries, other._entries)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"ParamSnapshot({len(self)} tensors, tasks={sorted(self.tasks())})"
