"""Programmatic detection of repeated (agent, action) step patterns.

Cyclic behavior is mechanically checkable, so it is detected here rather than
delegated to a model: each step gets a signature of its agent name and a
normalized action key, and maximal periodic runs over the signature sequence
become loop groups. The groups are injected into the serialized graph to
anchor planner-vs-executor reasoning.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .cases import FailureCase

MAX_PERIOD = 4

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")
_WS_RE = re.compile(r"\s+")

Signature = tuple[str, str]


@dataclass(frozen=True)
class LoopGroup:
    """A maximal run of a repeating step pattern.

    ``signature`` is the (agent, action key) of the run's entry step;
    ``period`` is the repetition length in steps; ``occurrence_count`` the
    number of whole repetitions. Roles mark the first member as entry, the
    last as exit, the rest as internal.
    """

    signature: Signature
    period: int
    member_step_ids: tuple[int, ...]
    occurrence_count: int

    @property
    def roles(self) -> dict[int, str]:
        roles = {}
        for position, step_id in enumerate(self.member_step_ids):
            if position == 0:
                roles[step_id] = "entry"
            elif position == len(self.member_step_ids) - 1:
                roles[step_id] = "exit"
            else:
                roles[step_id] = "internal"
        return roles


def normalize_action(content: str) -> str:
    """Action key of one step: the first non-empty content line, lowercased,
    with volatile tokens (URLs, numbers) stripped."""
    first_line = ""
    for line in content.splitlines():
        if line.strip():
            first_line = line.strip()
            break
    key = first_line.casefold()
    key = _URL_RE.sub(" ", key)
    key = _NUMBER_RE.sub(" ", key)
    return _WS_RE.sub(" ", key).strip()


def signature_sequence(case: FailureCase) -> list[Signature]:
    return [(step.agent_name, normalize_action(step.content)) for step in case.steps]


def find_loop_runs(
    signatures: list[Signature], max_period: int = MAX_PERIOD
) -> list[tuple[int, int, int]]:
    """All maximal periodic runs over a signature sequence.

    A run (period, start, length) satisfies signatures[j] == signatures[j+period]
    for every j in [start, start+length-1-period], with length >= 2*period, and
    cannot be extended in either direction. Runs whose span is covered by a
    smaller-period run are dropped. Results sorted by (start, period).
    """
    n = len(signatures)
    runs: list[tuple[int, int, int]] = []
    for period in range(1, max_period + 1):
        if n < 2 * period:
            continue
        # match[j] is True when position j agrees with its successor one
        # period later; maximal True-blocks of length >= period are runs.
        match = [signatures[j] == signatures[j + period] for j in range(n - period)]
        j = 0
        while j < len(match):
            if not match[j]:
                j += 1
                continue
            block_start = j
            while j < len(match) and match[j]:
                j += 1
            block_len = j - block_start
            if block_len >= period:
                runs.append((period, block_start, block_len + period))
    kept = []
    for period, start, length in runs:
        covered = any(
            p2 < period and s2 <= start and s2 + l2 >= start + length
            for p2, s2, l2 in runs
        )
        if not covered:
            kept.append((period, start, length))
    return sorted(kept, key=lambda r: (r[1], r[0]))


def detect_loop_groups(case: FailureCase, max_period: int = MAX_PERIOD) -> list[LoopGroup]:
    """Loop groups of one trajectory; identical trajectories yield identical lists."""
    signatures = signature_sequence(case)
    groups = []
    for period, start, length in find_loop_runs(signatures, max_period):
        groups.append(
            LoopGroup(
                signature=signatures[start],
                period=period,
                member_step_ids=tuple(range(start, start + length)),
                occurrence_count=length // period,
            )
        )
    return groups
