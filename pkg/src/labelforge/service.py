"""Application core: accounts, sessions, project lifecycle, and the
retrain-evaluate-select cycle that runs when a batch completes.

Training happens on a background worker (one job per project at a time);
reads keep serving the previous snapshot while a cycle is in flight, and the
next batch becomes visible only after the cycle commits.
"""

from __future__ import annotations

import secrets
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import active_learning, classifier, irr
from .coordinator import ChangeSet, Coordinator, ProjectState, SubmitResult
from .domain import (
    ALMethod,
    Annotation,
    AnnotationSource,
    Coder,
    LabelClass,
    Project,
    ProjectSettings,
    Record,
    RecordStatus,
    Role,
    check_permission,
    new_id,
    utcnow,
    validate_project_config,
)
from .errors import (
    AuthenticationError,
    CorpusExhausted,
    DegenerateTrainingSet,
    NotFound,
    PermissionDenied,
    StateConflict,
    ValidationFailure,
)
from .ingest import IngestReport, parse_upload
from .store import Store
from .vectorizer import fit_vocabulary, transform

# Settings fields still editable once a project exists.
MUTABLE_SETTINGS = {"lease_ttl_seconds", "irr_overlap_percent", "al_method"}


@dataclass
class ServiceConfig:
    port: int = 8000
    data_dir: Path = Path("./data")
    session_ttl_seconds: int = 30 * 24 * 3600
    upload_max_bytes: int = 100 * 1024 * 1024
    lease_sweep_seconds: int = 60
    static_dir: Optional[Path] = None

    def validation_errors(self) -> list[str]:
        errors = []
        if not 0 < self.port < 65536:
            errors.append("port must be in 1..65535")
        if self.session_ttl_seconds < 1:
            errors.append("session_ttl_seconds must be positive")
        if self.upload_max_bytes < 1:
            errors.append("upload_max_bytes must be positive")
        if self.lease_sweep_seconds < 1:
            errors.append("lease_sweep_seconds must be positive")
        if self.static_dir is not None and not Path(self.static_dir).is_dir():
            errors.append(f"static_dir does not exist: {self.static_dir}")
        return errors


@dataclass
class CycleResult:
    snapshot: Optional[classifier.ModelSnapshot]
    batch: Optional[active_learning.Batch]


class LabelService:
    def __init__(
        self,
        store: Optional[Store] = None,
        config: Optional[ServiceConfig] = None,
        synchronous_cycles: bool = False,
    ):
        self.config = config or ServiceConfig()
        self.store = store
        self.coders: dict[str, Coder] = {}
        self.sessions: dict[str, tuple[str, float]] = {}
        self._coordinators: dict[str, Coordinator] = {}
        self._registry_lock = threading.Lock()
        self._cycle_flags: dict[str, threading.Lock] = {}
        self._synchronous_cycles = synchronous_cycles
        self._executor: Optional[ThreadPoolExecutor] = None
        self._sweeper: Optional[threading.Timer] = None
        self._closed = False
        if store is not None:
            self.coders = store.load_coders()
            self.sessions = store.load_sessions()
            for state in store.load_project_states():
                self._coordinators[state.project.id] = Coordinator(state, persist=store.apply)

    # ---------------------------------------------------------------- runtime

    def _ensure_executor(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=2, thread_name_prefix="labelforge-train")
        return self._executor

    def start_background_tasks(self) -> None:
        self._schedule_sweep()

    def _schedule_sweep(self) -> None:
        if self._closed:
            return
        self.expire_all_leases(utcnow())
        self._sweeper = threading.Timer(self.config.lease_sweep_seconds, self._schedule_sweep)
        self._sweeper.daemon = True
        self._sweeper.start()

    def close(self) -> None:
        self._closed = True
        if self._sweeper is not None:
            self._sweeper.cancel()
        if self._executor is not None:
            self._executor.shutdown(wait=True)
        if self.store is not None:
            self.store.close()

    # --------------------------------------------------------------- accounts

    def create_coder(self, username: str, role: Role) -> Coder:
        with self._registry_lock:
            for existing in self.coders.values():
                if existing.username == username:
                    raise StateConflict(f"username already exists: {username}")
            coder = Coder(id=new_id(), username=username, role=role)
            self.coders[coder.id] = coder
            if self.store is not None:
                self.store.upsert_coder(coder)
            return coder

    def find_coder(self, username: str) -> Optional[Coder]:
        for coder in self.coders.values():
            if coder.username == username:
                return coder
        return None

    def create_session(self, coder_id: str, now: Optional[float] = None) -> str:
        if coder_id not in self.coders:
            raise NotFound("unknown coder")
        now = utcnow() if now is None else now
        token = secrets.token_urlsafe(32)
        expiry = now + self.config.session_ttl_seconds
        with self._registry_lock:
            self.sessions[token] = (coder_id, expiry)
        if self.store is not None:
            self.store.upsert_session(token, coder_id, expiry)
        return token

    def authenticate(self, token: Optional[str], now: Optional[float] = None) -> Coder:
        now = utcnow() if now is None else now
        if not token:
            raise AuthenticationError("missing session token")
        session = self.sessions.get(token)
        if session is None or session[1] < now:
            raise AuthenticationError("invalid or expired session token")
        return self.coders[session[0]]

    # --------------------------------------------------------------- projects

    def coordinator(self, project_id: str) -> Coordinator:
        coord = self._coordinators.get(project_id)
        if coord is None:
            raise NotFound("unknown project")
        return coord

    def project_ids(self) -> list[str]:
        return list(self._coordinators)

    def find_assignment_project(self, assignment_id: str) -> str:
        for project_id, coord in self._coordinators.items():
            if assignment_id in coord.state.assignments:
                return project_id
        raise NotFound("unknown assignment")

    def find_annotation_project(self, annotation_id: str) -> str:
        for project_id, coord in self._coordinators.items():
            if annotation_id in coord.state.annotations:
                return project_id
        raise NotFound("unknown annotation")

    def find_record_project(self, record_id: str) -> str:
        for project_id, coord in self._coordinators.items():
            if record_id in coord.state.records:
                return project_id
        raise NotFound("unknown record")

    def require_member(self, project_id: str, coder: Coder) -> Coordinator:
        coord = self.coordinator(project_id)
        if coder.id not in coord.state.members:
            raise PermissionDenied("not a member of this project")
        return coord

    def require_permission(self, project_id: str, coder: Coder, action) -> Coordinator:
        coord = self.require_member(project_id, coder)
        if not check_permission(coder, action):
            raise PermissionDenied(f"role {coder.role.value} may not {action}")
        return coord

    def create_project(
        self,
        admin: Coder,
        name: str,
        description: str,
        label_defs: Sequence[tuple[str, str]],
        settings: ProjectSettings,
        csv_bytes: bytes,
        codebook: Optional[bytes] = None,
        now: Optional[float] = None,
    ) -> tuple[ProjectState, IngestReport]:
        """Validate, ingest, fit the vocabulary, seed pre-labels, and select
        batch 0 - atomically from the caller's perspective."""
        if admin.role is not Role.ADMIN:
            raise PermissionDenied("only admins can create projects")
        now = utcnow() if now is None else now
        rows, report = parse_upload(csv_bytes, [label_name for label_name, _ in label_defs])
        errors = validate_project_config(name, [n for n, _ in label_defs], settings, rows)
        if not rows:
            errors.append("upload contains no usable rows")
        if errors:
            raise ValidationFailure(errors)

        project = Project(
            id=new_id(),
            name=name,
            description=description,
            settings=settings,
            codebook=codebook,
            created_at=now,
        )
        state = ProjectState(project=project, labels={}, label_order=[], members={admin.id})
        label_by_name: dict[str, str] = {}
        for label_name, label_description in label_defs:
            label = LabelClass(
                id=new_id(), project_id=project.id, name=label_name, description=label_description
            )
            state.labels[label.id] = label
            state.label_order.append(label.id)
            label_by_name[label_name] = label.id
        for row in rows:
            record = Record(
                id=new_id(),
                project_id=project.id,
                text=row.text,
                upload_order=row.upload_order,
                external_id=row.external_id,
            )
            if row.pre_label is not None:
                record = record.with_status(
                    RecordStatus.LABELED, final_label_id=label_by_name[row.pre_label]
                )
                annotation = Annotation(
                    id=new_id(),
                    record_id=record.id,
                    coder_id=admin.id,
                    label_id=label_by_name[row.pre_label],
                    elapsed_ms=0,
                    source=AnnotationSource.PRE_LABELED,
                    created_at=now,
                )
                state.annotations[annotation.id] = annotation
            state.records[record.id] = record
        state.vocabulary = fit_vocabulary(
            [r.text for r in state.records.values()], settings.max_vocabulary
        )

        if self.store is not None:
            self.store.create_project(state)
        coord = Coordinator(state, persist=self.store.apply if self.store is not None else None)
        with self._registry_lock:
            self._coordinators[project.id] = coord

        # Initial cycle: pre-labels spanning >= 2 classes seed the model so
        # batch 0 can already be uncertainty-selected.
        self.run_cycle(project.id, now=now, initial=True)
        return state, report

    def add_project_member(self, project_id: str, admin: Coder, username: str, role: Role) -> tuple[Coder, str]:
        coord = self.require_permission(project_id, admin, "edit_settings")
        coder = self.find_coder(username)
        if coder is None:
            coder = self.create_coder(username, role)
        with coord.lock:
            coord.state.members.add(coder.id)
        if self.store is not None:
            self.store.add_member(project_id, coder.id)
        token = self.create_session(coder.id)
        return coder, token

    def update_settings(self, project_id: str, admin: Coder, updates: dict) -> ProjectSettings:
        coord = self.require_permission(project_id, admin, "edit_settings")
        with coord.lock:
            current = coord.state.project.settings
            for key in updates:
                if key in MUTABLE_SETTINGS:
                    continue
                if key == "batch_size" and not coord.state.batches:
                    continue
                raise StateConflict(f"setting {key} is immutable")
            fields = dict(
                batch_size=current.batch_size,
                al_method=current.al_method,
                irr_enabled=current.irr_enabled,
                irr_overlap_percent=current.irr_overlap_percent,
                irr_coder_count=current.irr_coder_count,
                lease_ttl_seconds=current.lease_ttl_seconds,
                max_vocabulary=current.max_vocabulary,
                cv_folds=current.cv_folds,
            )
            for key, value in updates.items():
                if key == "al_method":
                    value = ALMethod(value)
                fields[key] = value
            settings = ProjectSettings(**fields)
            errors = settings.validation_errors()
            if errors:
                raise ValidationFailure(errors)
            coord.state.project = replace(coord.state.project, settings=settings)
            if self.store is not None:
                self.store.update_project_settings(project_id, settings)
            return settings

    # ------------------------------------------------------------ train cycle

    def _cycle_lock(self, project_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._cycle_flags.setdefault(project_id, threading.Lock())

    def handle_submit_result(self, project_id: str, result: SubmitResult) -> None:
        if result.batch_completed:
            self.schedule_cycle(project_id)

    def schedule_cycle(self, project_id: str) -> None:
        if self._synchronous_cycles:
            self.run_cycle(project_id)
        else:
            self._ensure_executor().submit(self._run_cycle_safely, project_id)

    def _run_cycle_safely(self, project_id: str) -> None:
        try:
            self.run_cycle(project_id)
        except (CorpusExhausted, StateConflict):
            pass

    def run_cycle(self, project_id: str, now: Optional[float] = None, initial: bool = False) -> CycleResult:
        """Train on all labeled records, snapshot cross-validated metrics, and
        select the next batch. Falls back to random selection (and appends no
        snapshot) when training is degenerate or active learning is off."""
        now = utcnow() if now is None else now
        coord = self.coordinator(project_id)
        cycle_lock = self._cycle_lock(project_id)
        with cycle_lock:
            with coord.lock:
                open_batch = coord.open_batch()
                if open_batch is not None:
                    raise StateConflict("batch incomplete")
                settings = coord.state.project.settings
                batch_index = len(coord.state.batches)
                labeled = [
                    (r.text, r.final_label_id)
                    for r in coord.state.records.values()
                    if r.status is RecordStatus.LABELED and r.final_label_id is not None
                ]
                vocabulary = coord.state.vocabulary

            # The initial seed cycle trains a model so batch 0 can be
            # uncertainty-selected, but appends no snapshot: snapshots are
            # one per completed batch.
            snapshot = None
            model = None
            if settings.al_method is not ALMethod.RANDOM and labeled:
                texts = [t for t, _ in labeled]
                y = [label for _, label in labeled]
                try:
                    X = [transform(t, vocabulary) for t in texts]
                    model = classifier.train(X, y)
                    if not initial:
                        metrics = classifier.cross_validate(
                            X, y, folds=settings.cv_folds, seed=batch_index
                        )
                        snapshot = classifier.ModelSnapshot(
                            batch_index=batch_index - 1,
                            metrics=metrics,
                            model=model,
                            trained_at=now,
                        )
                except DegenerateTrainingSet:
                    model = None

            with coord.lock:
                if snapshot is not None:
                    coord.append_snapshot(snapshot)
                unlabeled = [
                    r
                    for r in coord.state.records.values()
                    if r.status is RecordStatus.UNLABELED
                ]
                if not unlabeled:
                    return CycleResult(snapshot=snapshot, batch=None)
                batch = active_learning.select_batch(
                    unlabeled,
                    model,
                    vocabulary,
                    settings.al_method,
                    settings.batch_size,
                    project_id,
                    batch_index,
                    irr_enabled=settings.irr_enabled,
                    irr_overlap_percent=settings.irr_overlap_percent,
                )
                coord.install_batch(batch)
                return CycleResult(snapshot=snapshot, batch=batch)

    # ---------------------------------------------------------------- metrics

    def expire_all_leases(self, now: float) -> int:
        total = 0
        for coord in list(self._coordinators.values()):
            total += coord.expire_leases(now)
        return total

    def irr_report(self, project_id: str) -> irr.IrrSummary:
        coord = self.coordinator(project_id)
        with coord.lock:
            annotations = list(coord.state.annotations.values())
            categories = list(coord.state.label_order)
            n = coord.state.project.settings.irr_coder_count
        usernames = {cid: coder.username for cid, coder in self.coders.items()}
        return irr.irr_summary(annotations, categories, usernames, irr_coder_count=n)
