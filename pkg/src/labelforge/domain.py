"""Core entities, the record lifecycle state machine, and permission rules.

Everything here is a plain immutable-ish value; all mutation is funneled
through the coordinator so these types stay safe to copy across threads.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import IllegalTransition


def new_id() -> str:
    return uuid.uuid4().hex


def utcnow() -> float:
    """Current UTC time as epoch seconds."""
    return time.time()


class Role(str, Enum):
    ADMIN = "admin"
    CODER = "coder"


class RecordStatus(str, Enum):
    UNLABELED = "unlabeled"
    IN_BATCH = "in_batch"
    ASSIGNED = "assigned"
    LABELED = "labeled"
    PENDING_SKIP_ADJUDICATION = "pending_skip_adjudication"
    PENDING_IRR_ADJUDICATION = "pending_irr_adjudication"
    DISCARDED = "discarded"


class RecordEvent(str, Enum):
    SELECT_INTO_BATCH = "select_into_batch"
    ASSIGN = "assign"
    LABEL = "label"
    SKIP = "skip"
    DISCARD = "discard"
    IRR_CONFLICT = "irr_conflict"
    ADJUDICATE = "adjudicate"
    LEASE_EXPIRED = "lease_expired"


class AnnotationSource(str, Enum):
    CODER = "coder"
    ADMIN_ADJUDICATION = "admin_adjudication"
    PRE_LABELED = "pre_labeled"


class ALMethod(str, Enum):
    RANDOM = "random"
    LEAST_CONFIDENT = "least_confident"
    MARGIN = "margin"
    ENTROPY = "entropy"


class Action(str, Enum):
    ANNOTATE = "annotate"
    VIEW_HISTORY = "view_history"
    ADMIN_LABEL = "admin_label"
    RESOLVE_SKIPS = "resolve_skips"
    DISCARD = "discard"
    ADJUDICATE_IRR = "adjudicate_irr"
    VIEW_DASHBOARD = "view_dashboard"
    EXPORT = "export"
    EDIT_SETTINGS = "edit_settings"


# Actions available to plain coders; admins get the full set.
CODER_ACTIONS = frozenset({Action.ANNOTATE, Action.VIEW_HISTORY})
ADMIN_ACTIONS = frozenset(Action)


@dataclass(frozen=True)
class ProjectSettings:
    batch_size: int = 30
    al_method: ALMethod = ALMethod.LEAST_CONFIDENT
    irr_enabled: bool = False
    irr_overlap_percent: int = 10
    irr_coder_count: int = 2
    lease_ttl_seconds: int = 900
    max_vocabulary: int = 50_000
    cv_folds: int = 5

    def validation_errors(self) -> list[str]:
        errors = []
        if self.batch_size < 1:
            errors.append("batch_size must be at least 1")
        if not 0 <= self.irr_overlap_percent <= 100:
            errors.append("irr_overlap_percent must be between 0 and 100")
        if self.irr_coder_count < 2:
            errors.append("irr_coder_count must be at least 2")
        if self.lease_ttl_seconds < 1:
            errors.append("lease_ttl_seconds must be positive")
        if self.max_vocabulary < 1:
            errors.append("max_vocabulary must be positive")
        if self.cv_folds < 2:
            errors.append("cv_folds must be at least 2")
        if self.irr_enabled:
            if self.irr_overlap_percent < 1:
                errors.append("irr_overlap_percent must be at least 1 when IRR is enabled")
            if self.batch_size < self.irr_coder_count:
                errors.append("batch_size must be at least irr_coder_count when IRR is enabled")
        return errors


@dataclass(frozen=True)
class Project:
    id: str
    name: str
    description: str
    settings: ProjectSettings
    codebook: Optional[bytes] = None
    created_at: float = field(default_factory=utcnow)


@dataclass(frozen=True)
class LabelClass:
    id: str
    project_id: str
    name: str
    description: str = ""


@dataclass(frozen=True)
class Record:
    id: str
    project_id: str
    text: str
    upload_order: int
    external_id: Optional[str] = None
    status: RecordStatus = RecordStatus.UNLABELED
    final_label_id: Optional[str] = None

    def with_status(self, status: RecordStatus, final_label_id: Optional[str] = None) -> "Record":
        if final_label_id is None:
            final_label_id = self.final_label_id
        return replace(self, status=status, final_label_id=final_label_id)


@dataclass(frozen=True)
class Coder:
    id: str
    username: str
    role: Role


@dataclass(frozen=True)
class Annotation:
    id: str
    record_id: str
    coder_id: str
    label_id: str
    elapsed_ms: int
    source: AnnotationSource
    created_at: float
    superseded: bool = False


# The fixed record lifecycle. Keys are (current status, event); anything
# absent is an illegal transition. DISCARDED is terminal.
_TRANSITIONS: dict[tuple[RecordStatus, RecordEvent], RecordStatus] = {
    (RecordStatus.UNLABELED, RecordEvent.SELECT_INTO_BATCH): RecordStatus.IN_BATCH,
    (RecordStatus.UNLABELED, RecordEvent.LABEL): RecordStatus.LABELED,
    (RecordStatus.IN_BATCH, RecordEvent.ASSIGN): RecordStatus.ASSIGNED,
    (RecordStatus.IN_BATCH, RecordEvent.LABEL): RecordStatus.LABELED,
    (RecordStatus.ASSIGNED, RecordEvent.ASSIGN): RecordStatus.ASSIGNED,
    (RecordStatus.ASSIGNED, RecordEvent.LABEL): RecordStatus.LABELED,
    (RecordStatus.ASSIGNED, RecordEvent.SKIP): RecordStatus.PENDING_SKIP_ADJUDICATION,
    (RecordStatus.ASSIGNED, RecordEvent.LEASE_EXPIRED): RecordStatus.IN_BATCH,
    (RecordStatus.ASSIGNED, RecordEvent.IRR_CONFLICT): RecordStatus.PENDING_IRR_ADJUDICATION,
    (RecordStatus.PENDING_SKIP_ADJUDICATION, RecordEvent.ADJUDICATE): RecordStatus.LABELED,
    (RecordStatus.PENDING_IRR_ADJUDICATION, RecordEvent.ADJUDICATE): RecordStatus.LABELED,
}
for _status in RecordStatus:
    if _status is not RecordStatus.DISCARDED:
        _TRANSITIONS[(_status, RecordEvent.DISCARD)] = RecordStatus.DISCARDED


def transition_record_status(status: RecordStatus, event: RecordEvent) -> RecordStatus:
    """Apply one lifecycle event; raises IllegalTransition (no state change)
    for any edge outside the fixed machine."""
    try:
        return _TRANSITIONS[(status, event)]
    except KeyError:
        raise IllegalTransition(f"cannot apply {event.value} to a record in status {status.value}") from None


def legal_events(status: RecordStatus) -> frozenset[RecordEvent]:
    return frozenset(ev for (st, ev) in _TRANSITIONS if st is status)


def check_permission(role: Role | Coder, action: Action | str) -> bool:
    """Coders may annotate and view their history; admins may do everything.
    Unknown actions are denied."""
    if isinstance(role, Coder):
        role = role.role
    try:
        action = Action(action)
    except ValueError:
        return False
    if role is Role.ADMIN:
        return action in ADMIN_ACTIONS
    return action in CODER_ACTIONS


def validate_project_config(
    name: str,
    labels: Sequence[str],
    settings: ProjectSettings,
    data_rows: Iterable[object] = (),
) -> list[str]:
    """Collect every violated project invariant. Empty list means creatable.

    ``data_rows`` may be any objects with an optional ``pre_label`` attribute
    (ingest rows); pre-labels outside the declared label set are reported.
    """
    errors: list[str] = []
    if not name or not name.strip():
        errors.append("project name must be nonempty")
    if len(labels) < 2:
        errors.append("fewer than 2 label classes")
    seen: set[str] = set()
    for label in labels:
        if not label or not label.strip():
            errors.append("label names must be nonempty")
        elif label in seen:
            errors.append(f"duplicate label name: {label!r}")
        seen.add(label)
    errors.extend(settings.validation_errors())
    declared = set(labels)
    unknown: list[str] = []
    for row in data_rows:
        pre = getattr(row, "pre_label", None)
        if pre is not None and pre not in declared and pre not in unknown:
            unknown.append(pre)
    for value in unknown:
        errors.append(f"unknown pre-label: {value!r}")
    return errors
