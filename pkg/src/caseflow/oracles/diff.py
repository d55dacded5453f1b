"""Trace comparison for differential runs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Divergence:
    position: int
    left: tuple
    right: tuple

    def __str__(self) -> str:  # pragma: no cover - debugging aid
        return f"divergence at step {self.position}: {self.left} != {self.right}"


def diff_traces(left: list, right: list) -> Divergence | None:
    """First position where two step traces disagree, or None when equal.

    Each trace is a list of per-step observation collections; collections
    compare as sorted multisets because within-step ordering is a scheduler
    artifact, not semantics.
    """
    for i in range(max(len(left), len(right))):
        left_step = sorted(left[i]) if i < len(left) else None
        right_step = sorted(right[i]) if i < len(right) else None
        if left_step != right_step:
            return Divergence(i, tuple(left_step or ()), tuple(right_step or ()))
    return None
