"""Workflow state for one project: assignment leasing, double-coding fan-out,
skip and disagreement adjudication, discards, batch completion, and the
dashboard statistics computed from annotations.

All mutation happens under a per-project re-entrant lock (single-writer
discipline); entity values themselves are immutable, so reads hand out
snapshots safely. Each mutating operation persists exactly one change set
through the injected hook before the in-memory state is updated.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .active_learning import Batch, BatchStatus
from .classifier import ModelSnapshot
from .domain import (
    Annotation,
    AnnotationSource,
    LabelClass,
    Project,
    Record,
    RecordEvent,
    RecordStatus,
    new_id,
    transition_record_status,
)
from .errors import NotFound, StateConflict, ValidationFailure
from .vectorizer import Vocabulary


class AssignmentResolution(str, Enum):
    PENDING = "pending"
    LABELED = "labeled"
    SKIPPED = "skipped"
    EXPIRED = "expired"


@dataclass(frozen=True)
class Assignment:
    id: str
    record_id: str
    coder_id: str
    issued_at: float
    lease_expires_at: float
    displayed_at: float
    resolution: AssignmentResolution = AssignmentResolution.PENDING

    def resolved(self, resolution: AssignmentResolution) -> "Assignment":
        return replace(self, resolution=resolution)


@dataclass(frozen=True)
class TimingStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    outliers: tuple[float, ...]


def box_stats(values: Sequence[float]) -> TimingStats:
    """Five-number box-plot summary: quartiles by linear interpolation,
    whiskers at the most extreme points within 1.5*IQR of the quartiles."""
    if not values:
        raise ValueError("box_stats requires at least one value")
    data = np.sort(np.asarray(values, dtype=np.float64))
    q1, median, q3 = (float(np.quantile(data, q)) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = data[(data >= low_fence) & (data <= high_fence)]
    outliers = data[(data < low_fence) | (data > high_fence)]
    return TimingStats(
        minimum=float(inside.min()),
        q1=q1,
        median=median,
        q3=q3,
        maximum=float(inside.max()),
        outliers=tuple(float(v) for v in outliers),
    )


class SubmitOutcome(str, Enum):
    FINALIZED = "finalized"
    AWAITING_CODERS = "awaiting_coders"
    CONFLICT_QUEUED = "conflict_queued"


@dataclass(frozen=True)
class SubmitResult:
    outcome: SubmitOutcome
    annotation: Annotation
    record: Record
    batch_completed: bool


@dataclass
class ChangeSet:
    """Entities touched by one mutating operation; persisted atomically."""

    project_id: str
    records: list[Record] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    assignments: list[Assignment] = field(default_factory=list)
    batches: list[Batch] = field(default_factory=list)
    snapshots: list[ModelSnapshot] = field(default_factory=list)


PersistHook = Callable[[ChangeSet], None]


@dataclass
class ProjectState:
    project: Project
    labels: dict[str, LabelClass]
    label_order: list[str]
    records: dict[str, Record] = field(default_factory=dict)
    annotations: dict[str, Annotation] = field(default_factory=dict)
    assignments: dict[str, Assignment] = field(default_factory=dict)
    batches: list[Batch] = field(default_factory=list)
    snapshots: list[ModelSnapshot] = field(default_factory=list)
    members: set[str] = field(default_factory=set)
    vocabulary: Optional[Vocabulary] = None


class Coordinator:
    """Serializes every workflow transition for a single project."""

    def __init__(self, state: ProjectState, persist: Optional[PersistHook] = None):
        self.state = state
        self._persist = persist
        self.lock = threading.RLock()
        self._assignments_by_record: dict[str, list[str]] = {}
        self._annotations_by_record: dict[str, list[str]] = {}
        self._record_batch: dict[str, Batch] = {}
        for assignment in state.assignments.values():
            self._assignments_by_record.setdefault(assignment.record_id, []).append(assignment.id)
        for annotation in state.annotations.values():
            self._annotations_by_record.setdefault(annotation.record_id, []).append(annotation.id)
        for batch in state.batches:
            for rid in batch.record_ids:
                self._record_batch[rid] = batch

    # ------------------------------------------------------------------ core

    def _commit(self, cs: ChangeSet) -> None:
        if self._persist is not None:
            self._persist(cs)
        for record in cs.records:
            self.state.records[record.id] = record
        for annotation in cs.annotations:
            if annotation.id not in self.state.annotations:
                self._annotations_by_record.setdefault(annotation.record_id, []).append(annotation.id)
            self.state.annotations[annotation.id] = annotation
        for assignment in cs.assignments:
            if assignment.id not in self.state.assignments:
                self._assignments_by_record.setdefault(assignment.record_id, []).append(assignment.id)
            self.state.assignments[assignment.id] = assignment
        for batch in cs.batches:
            for i, existing in enumerate(self.state.batches):
                if existing.id == batch.id:
                    self.state.batches[i] = batch
                    break
            else:
                self.state.batches.append(batch)
            for rid in batch.record_ids:
                self._record_batch[rid] = batch
        for snapshot in cs.snapshots:
            self.state.snapshots.append(snapshot)

    def _pending_assignments(self, record_id: str) -> list[Assignment]:
        return [
            self.state.assignments[aid]
            for aid in self._assignments_by_record.get(record_id, ())
            if self.state.assignments[aid].resolution is AssignmentResolution.PENDING
        ]

    def _votes(self, record_id: str) -> list[Annotation]:
        """Non-superseded coder-source annotations for the record."""
        return [
            self.state.annotations[aid]
            for aid in self._annotations_by_record.get(record_id, ())
            if not self.state.annotations[aid].superseded
            and self.state.annotations[aid].source is AnnotationSource.CODER
        ]

    def _active_annotations(self, record_id: str) -> list[Annotation]:
        return [
            self.state.annotations[aid]
            for aid in self._annotations_by_record.get(record_id, ())
            if not self.state.annotations[aid].superseded
        ]

    def _skipped_by(self, record_id: str, coder_id: str) -> bool:
        return any(
            a.coder_id == coder_id and a.resolution is AssignmentResolution.SKIPPED
            for aid in self._assignments_by_record.get(record_id, ())
            for a in (self.state.assignments[aid],)
        )

    def _required_coders(self, record_id: str) -> int:
        batch = self._record_batch.get(record_id)
        if batch is not None and record_id in batch.irr_record_ids:
            return self.state.project.settings.irr_coder_count
        return 1

    def open_batch(self) -> Optional[Batch]:
        if self.state.batches and self.state.batches[-1].status is BatchStatus.OPEN:
            return self.state.batches[-1]
        return None

    def _supersede_prior(self, cs: ChangeSet, record_id: str, coder_id: str) -> None:
        for annotation in self._active_annotations(record_id):
            if annotation.coder_id == coder_id:
                cs.annotations.append(replace(annotation, superseded=True))

    def _check_batch_completion(self, cs: ChangeSet, record_id: str) -> bool:
        """If the touched record's batch is open and every member is now
        labeled or discarded, mark it complete inside the same change set."""
        batch = self._record_batch.get(record_id)
        if batch is None or batch.status is not BatchStatus.OPEN:
            return False
        pending_records = dict((r.id, r) for r in cs.records)
        for rid in batch.record_ids:
            record = pending_records.get(rid, self.state.records[rid])
            if record.status not in (RecordStatus.LABELED, RecordStatus.DISCARDED):
                return False
        cs.batches.append(batch.completed())
        return True

    # ----------------------------------------------------------- batch setup

    def install_batch(self, batch: Batch) -> Batch:
        """Register a freshly selected batch and move its records to in_batch."""
        with self.lock:
            cs = ChangeSet(self.state.project.id, batches=[batch])
            for rid in batch.record_ids:
                record = self.state.records[rid]
                cs.records.append(
                    record.with_status(
                        transition_record_status(record.status, RecordEvent.SELECT_INTO_BATCH)
                    )
                )
            self._commit(cs)
            return batch

    def append_snapshot(self, snapshot: ModelSnapshot) -> None:
        with self.lock:
            self._commit(ChangeSet(self.state.project.id, snapshots=[snapshot]))

    # ------------------------------------------------------------ annotation

    def next_assignment(self, coder_id: str, now: float) -> Optional[tuple[Assignment, Record]]:
        """Serve the lowest-upload_order available record in the open batch,
        or the coder's existing pending assignment (idempotent while leased)."""
        with self.lock:
            batch = self.open_batch()
            for assignment in self.state.assignments.values():
                if (
                    assignment.coder_id == coder_id
                    and assignment.resolution is AssignmentResolution.PENDING
                ):
                    return assignment, self.state.records[assignment.record_id]
            if batch is None:
                return None
            candidates = sorted(
                (self.state.records[rid] for rid in batch.record_ids),
                key=lambda r: r.upload_order,
            )
            for record in candidates:
                if record.status not in (RecordStatus.IN_BATCH, RecordStatus.ASSIGNED):
                    continue
                if any(a.coder_id == coder_id for a in self._active_annotations(record.id)):
                    continue
                if self._skipped_by(record.id, coder_id):
                    continue
                pending = self._pending_assignments(record.id)
                occupied = {a.coder_id for a in pending} | {
                    v.coder_id for v in self._votes(record.id)
                }
                if coder_id in occupied or len(occupied) >= self._required_coders(record.id):
                    continue
                ttl = self.state.project.settings.lease_ttl_seconds
                assignment = Assignment(
                    id=new_id(),
                    record_id=record.id,
                    coder_id=coder_id,
                    issued_at=now,
                    lease_expires_at=now + ttl,
                    displayed_at=now,
                )
                cs = ChangeSet(self.state.project.id, assignments=[assignment])
                if record.status is RecordStatus.IN_BATCH:
                    cs.records.append(
                        record.with_status(transition_record_status(record.status, RecordEvent.ASSIGN))
                    )
                self._commit(cs)
                return assignment, self.state.records[record.id]
            return None

    def _assignment_for_submit(self, assignment_id: str, coder_id: str) -> Assignment:
        assignment = self.state.assignments.get(assignment_id)
        if assignment is None:
            raise NotFound("unknown assignment")
        if assignment.coder_id != coder_id:
            raise StateConflict("assignment belongs to another coder")
        return assignment

    def submit_label(
        self, assignment_id: str, label_id: str, coder_id: str, now: float
    ) -> SubmitResult:
        with self.lock:
            assignment = self._assignment_for_submit(assignment_id, coder_id)
            if label_id not in self.state.labels:
                raise ValidationFailure(["label does not belong to this project"])
            record = self.state.records[assignment.record_id]
            if assignment.resolution is AssignmentResolution.EXPIRED:
                # Late-submission grace: accept if the record was not handed
                # to someone else in the meantime and a coder slot is free.
                if record.status not in (RecordStatus.IN_BATCH, RecordStatus.ASSIGNED):
                    raise StateConflict("record is no longer labelable")
                occupied = {a.coder_id for a in self._pending_assignments(record.id)} | {
                    v.coder_id for v in self._votes(record.id)
                }
                if coder_id in occupied or len(occupied) >= self._required_coders(record.id):
                    raise StateConflict("record was reassigned after the lease expired")
            elif assignment.resolution is not AssignmentResolution.PENDING:
                raise StateConflict("assignment already resolved")

            elapsed_ms = max(0, int(round((now - assignment.displayed_at) * 1000)))
            annotation = Annotation(
                id=new_id(),
                record_id=record.id,
                coder_id=coder_id,
                label_id=label_id,
                elapsed_ms=elapsed_ms,
                source=AnnotationSource.CODER,
                created_at=now,
            )
            cs = ChangeSet(self.state.project.id)
            self._supersede_prior(cs, record.id, coder_id)
            cs.annotations.append(annotation)
            cs.assignments.append(assignment.resolved(AssignmentResolution.LABELED))

            votes = [v for v in self._votes(record.id) if v.coder_id != coder_id]
            votes.append(annotation)
            required = self._required_coders(record.id)
            batch_completed = False
            if len(votes) < required:
                outcome = SubmitOutcome.AWAITING_CODERS
                if record.status is RecordStatus.IN_BATCH:
                    cs.records.append(
                        record.with_status(transition_record_status(record.status, RecordEvent.ASSIGN))
                    )
            elif len({v.label_id for v in votes}) == 1:
                outcome = SubmitOutcome.FINALIZED
                cs.records.append(
                    record.with_status(
                        transition_record_status(record.status, RecordEvent.LABEL),
                        final_label_id=label_id,
                    )
                )
                batch_completed = self._check_batch_completion(cs, record.id)
            else:
                outcome = SubmitOutcome.CONFLICT_QUEUED
                cs.records.append(
                    record.with_status(
                        transition_record_status(record.status, RecordEvent.IRR_CONFLICT)
                    )
                )
            self._commit(cs)
            return SubmitResult(
                outcome=outcome,
                annotation=annotation,
                record=self.state.records[record.id],
                batch_completed=batch_completed,
            )

    def skip(self, assignment_id: str, coder_id: str, now: float) -> Record:
        """Forward the record to the admin skip queue; sibling leases on a
        double-coded record are cancelled because the record leaves the
        coder queues entirely."""
        with self.lock:
            assignment = self._assignment_for_submit(assignment_id, coder_id)
            if assignment.resolution is not AssignmentResolution.PENDING:
                raise StateConflict("assignment already resolved")
            record = self.state.records[assignment.record_id]
            cs = ChangeSet(self.state.project.id)
            cs.assignments.append(assignment.resolved(AssignmentResolution.SKIPPED))
            for sibling in self._pending_assignments(record.id):
                if sibling.id != assignment.id:
                    cs.assignments.append(sibling.resolved(AssignmentResolution.EXPIRED))
            cs.records.append(
                record.with_status(transition_record_status(record.status, RecordEvent.SKIP))
            )
            self._commit(cs)
            return self.state.records[record.id]

    # ----------------------------------------------------------- admin flows

    def adjudicate(
        self,
        record_id: str,
        admin_id: str,
        now: float,
        label_id: Optional[str] = None,
        discard: bool = False,
    ) -> tuple[Record, bool]:
        """Resolve a skipped or disagreed record with a final label or a
        discard. Coder annotations are retained for IRR statistics."""
        if (label_id is None) == (not discard):
            raise StateConflict("adjudication needs exactly one of label or discard")
        with self.lock:
            record = self.state.records.get(record_id)
            if record is None:
                raise NotFound("unknown record")
            if record.status not in (
                RecordStatus.PENDING_SKIP_ADJUDICATION,
                RecordStatus.PENDING_IRR_ADJUDICATION,
            ):
                raise StateConflict("record is not awaiting adjudication")
            cs = ChangeSet(self.state.project.id)
            if discard:
                cs.records.append(
                    record.with_status(transition_record_status(record.status, RecordEvent.DISCARD))
                )
            else:
                if label_id not in self.state.labels:
                    raise ValidationFailure(["label does not belong to this project"])
                self._supersede_prior(cs, record.id, admin_id)
                cs.annotations.append(
                    Annotation(
                        id=new_id(),
                        record_id=record.id,
                        coder_id=admin_id,
                        label_id=label_id,
                        elapsed_ms=0,
                        source=AnnotationSource.ADMIN_ADJUDICATION,
                        created_at=now,
                    )
                )
                cs.records.append(
                    record.with_status(
                        transition_record_status(record.status, RecordEvent.ADJUDICATE),
                        final_label_id=label_id,
                    )
                )
            batch_completed = self._check_batch_completion(cs, record.id)
            self._commit(cs)
            return self.state.records[record_id], batch_completed

    def admin_label(
        self, record_id: str, label_id: str, admin_id: str, now: float
    ) -> tuple[Record, bool]:
        """Directly label a record outside the assignment flow (skew repair)."""
        with self.lock:
            record = self.state.records.get(record_id)
            if record is None:
                raise NotFound("unknown record")
            if record.status not in (RecordStatus.UNLABELED, RecordStatus.IN_BATCH):
                raise StateConflict("record is in flight")
            if label_id not in self.state.labels:
                raise ValidationFailure(["label does not belong to this project"])
            cs = ChangeSet(self.state.project.id)
            self._supersede_prior(cs, record.id, admin_id)
            cs.annotations.append(
                Annotation(
                    id=new_id(),
                    record_id=record.id,
                    coder_id=admin_id,
                    label_id=label_id,
                    elapsed_ms=0,
                    source=AnnotationSource.ADMIN_ADJUDICATION,
                    created_at=now,
                )
            )
            cs.records.append(
                record.with_status(
                    transition_record_status(record.status, RecordEvent.LABEL),
                    final_label_id=label_id,
                )
            )
            batch_completed = self._check_batch_completion(cs, record.id)
            self._commit(cs)
            return self.state.records[record_id], batch_completed

    def discard(self, record_id: str, admin_id: str, now: float) -> tuple[Record, bool]:
        with self.lock:
            record = self.state.records.get(record_id)
            if record is None:
                raise NotFound("unknown record")
            cs = ChangeSet(self.state.project.id)
            cs.records.append(
                record.with_status(transition_record_status(record.status, RecordEvent.DISCARD))
            )
            for pending in self._pending_assignments(record.id):
                cs.assignments.append(pending.resolved(AssignmentResolution.EXPIRED))
            batch_completed = self._check_batch_completion(cs, record.id)
            self._commit(cs)
            return self.state.records[record_id], batch_completed

    def modify_annotation(
        self, annotation_id: str, coder_id: str, new_label_id: str, now: float
    ) -> Annotation:
        """Supersede a prior annotation with a new label, preserving the
        original labeling time. Only finalized (labeled) records may be
        modified; in-flight and adjudication states would race the workflow."""
        with self.lock:
            annotation = self.state.annotations.get(annotation_id)
            if annotation is None:
                raise NotFound("unknown annotation")
            if annotation.coder_id != coder_id:
                raise StateConflict("annotation belongs to another coder")
            if annotation.superseded:
                raise StateConflict("annotation was already superseded")
            if new_label_id not in self.state.labels:
                raise ValidationFailure(["label does not belong to this project"])
            record = self.state.records[annotation.record_id]
            if record.status is not RecordStatus.LABELED:
                raise StateConflict("record is not in a modifiable state")
            replacement = Annotation(
                id=new_id(),
                record_id=annotation.record_id,
                coder_id=coder_id,
                label_id=new_label_id,
                elapsed_ms=annotation.elapsed_ms,
                source=annotation.source,
                created_at=now,
            )
            cs = ChangeSet(self.state.project.id)
            cs.annotations.append(replace(annotation, superseded=True))
            cs.annotations.append(replacement)
            final = self._recompute_final_label(record.id, cs)
            if final is not None and final != record.final_label_id:
                cs.records.append(replace(record, final_label_id=final))
            self._commit(cs)
            return replacement

    def _recompute_final_label(self, record_id: str, cs: ChangeSet) -> Optional[str]:
        """Latest adjudication wins; otherwise a unanimous coder vote; a
        post-hoc disagreement leaves the previous resolution standing."""
        staged = {a.id: a for a in cs.annotations}
        annotations = [
            staged.get(aid, self.state.annotations[aid])
            for aid in self._annotations_by_record.get(record_id, ())
        ]
        annotations += [a for a in cs.annotations if a.id not in self.state.annotations]
        active = [a for a in annotations if not a.superseded]
        adjudications = [a for a in active if a.source is AnnotationSource.ADMIN_ADJUDICATION]
        if adjudications:
            return max(adjudications, key=lambda a: a.created_at).label_id
        labels = {a.label_id for a in active if a.source is AnnotationSource.CODER}
        if len(labels) == 1:
            return labels.pop()
        return None

    # ---------------------------------------------------------------- leases

    def expire_leases(self, now: float) -> int:
        """Expire overdue pending leases; records with no remaining activity
        return to the available pool."""
        with self.lock:
            cs = ChangeSet(self.state.project.id)
            touched_records: set[str] = set()
            for assignment in self.state.assignments.values():
                if (
                    assignment.resolution is AssignmentResolution.PENDING
                    and assignment.lease_expires_at < now
                ):
                    cs.assignments.append(assignment.resolved(AssignmentResolution.EXPIRED))
                    touched_records.add(assignment.record_id)
            if not cs.assignments:
                return 0
            expired_ids = {a.id for a in cs.assignments}
            for record_id in touched_records:
                record = self.state.records[record_id]
                if record.status is not RecordStatus.ASSIGNED:
                    continue
                still_pending = [
                    a for a in self._pending_assignments(record_id) if a.id not in expired_ids
                ]
                if not still_pending and not self._votes(record_id):
                    cs.records.append(
                        record.with_status(
                            transition_record_status(record.status, RecordEvent.LEASE_EXPIRED)
                        )
                    )
            count = len(cs.assignments)
            self._commit(cs)
            return count

    # ----------------------------------------------------------------- reads

    def history(self, coder_id: str) -> list[Annotation]:
        with self.lock:
            items = [
                a
                for a in self.state.annotations.values()
                if a.coder_id == coder_id and not a.superseded
            ]
            return sorted(items, key=lambda a: a.created_at, reverse=True)

    def label_distribution(self) -> dict[str, dict[str, int]]:
        """Non-superseded annotation counts per (coder, label); adjudications
        count under the adjudicating admin, pre-labeled seeds are excluded."""
        with self.lock:
            counts: dict[str, dict[str, int]] = {}
            for annotation in self.state.annotations.values():
                if annotation.superseded or annotation.source is AnnotationSource.PRE_LABELED:
                    continue
                per_coder = counts.setdefault(annotation.coder_id, {})
                per_coder[annotation.label_id] = per_coder.get(annotation.label_id, 0) + 1
            return counts

    def timing_stats(self) -> dict[str, TimingStats]:
        with self.lock:
            per_coder: dict[str, list[float]] = {}
            for annotation in self.state.annotations.values():
                if annotation.superseded or annotation.source is not AnnotationSource.CODER:
                    continue
                per_coder.setdefault(annotation.coder_id, []).append(float(annotation.elapsed_ms))
            return {coder: box_stats(values) for coder, values in per_coder.items()}

    def skipped_queue(self) -> list[Record]:
        with self.lock:
            return self._records_in_status(RecordStatus.PENDING_SKIP_ADJUDICATION)

    def disagreement_queue(self) -> list[tuple[Record, list[Annotation]]]:
        with self.lock:
            return [
                (record, self._votes(record.id))
                for record in self._records_in_status(RecordStatus.PENDING_IRR_ADJUDICATION)
            ]

    def _records_in_status(self, status: RecordStatus) -> list[Record]:
        return sorted(
            (r for r in self.state.records.values() if r.status is status),
            key=lambda r: r.upload_order,
        )

    def records_in_statuses(self, statuses: Iterable[RecordStatus]) -> list[Record]:
        wanted = set(statuses)
        with self.lock:
            return sorted(
                (r for r in self.state.records.values() if r.status in wanted),
                key=lambda r: r.upload_order,
            )

    def status_counts(self) -> dict[str, int]:
        with self.lock:
            counts: dict[str, int] = {}
            for record in self.state.records.values():
                counts[record.status.value] = counts.get(record.status.value, 0) + 1
            return counts
