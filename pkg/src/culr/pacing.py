"""Baby-step scheduling: staged training sets built by merging difficulty buckets.

Stage k is the union of buckets 0..k, so stages grow monotonically and the
final stage is the full training set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .difficulty import BucketAssignment
from .errors import DataError


@dataclass(frozen=True)
class BabyStepSchedule:
    assignment: BucketAssignment
    epochs_per_stage: int
    stages: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.epochs_per_stage < 1:
            raise DataError(f"epochs_per_stage must be >= 1, got {self.epochs_per_stage}")
        if len(self.stages) != self.assignment.num_buckets:
            raise DataError("schedule must have one stage per bucket")

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def total_scheduled_epochs(self) -> int:
        return self.num_stages * self.epochs_per_stage

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_buckets": self.assignment.num_buckets,
                "bucket_sizes": list(self.assignment.sizes()),
                "buckets": [list(b) for b in self.assignment.buckets],
                "epochs_per_stage": self.epochs_per_stage,
                "stage_sizes": [len(s) for s in self.stages],
                "stages": [list(s) for s in self.stages],
            },
            sort_keys=True,
        )


def build_schedule(assignment: BucketAssignment, epochs_per_stage: int) -> BabyStepSchedule:
    """Cumulative bucket unions; stage doc ids are kept sorted for determinism."""
    if assignment.num_buckets == 0 or not assignment.all_doc_ids():
        raise DataError("cannot schedule an empty bucket assignment")
    stages = []
    acc: list[str] = []
    for bucket in assignment.buckets:
        acc.extend(bucket)
        stages.append(tuple(sorted(acc)))
    return BabyStepSchedule(assignment, epochs_per_stage, tuple(stages))


def stage_documents(schedule: BabyStepSchedule, stage_index: int) -> tuple[str, ...]:
    if not 0 <= stage_index < schedule.num_stages:
        raise IndexError(
            f"stage index {stage_index} out of range [0, {schedule.num_stages})"
        )
    return schedule.stages[stage_index]
