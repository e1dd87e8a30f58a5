"""Embedded transactional persistence on sqlite.

Every coordinator mutation lands as a single transaction; crash recovery is
simply reopening the store (stale leases are swept by the first lease sweep
after startup). Model coefficients are stored as JSON for portability.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .active_learning import Batch, BatchStatus
from .classifier import LinearModel, ModelMetrics, ModelSnapshot
from .coordinator import Assignment, AssignmentResolution, ChangeSet, ProjectState
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
)
from .vectorizer import Vocabulary

_SCHEMA = """
CREATE TABLE IF NOT EXISTS coders (
    id TEXT PRIMARY KEY,
    username TEXT UNIQUE NOT NULL,
    role TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    token TEXT PRIMARY KEY,
    coder_id TEXT NOT NULL,
    expiry REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS projects (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    description TEXT NOT NULL,
    settings TEXT NOT NULL,
    codebook BLOB,
    created_at REAL NOT NULL,
    vocabulary TEXT
);
CREATE TABLE IF NOT EXISTS project_members (
    project_id TEXT NOT NULL,
    coder_id TEXT NOT NULL,
    PRIMARY KEY (project_id, coder_id)
);
CREATE TABLE IF NOT EXISTS labels (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    name TEXT NOT NULL,
    description TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    external_id TEXT,
    text TEXT NOT NULL,
    status TEXT NOT NULL,
    upload_order INTEGER NOT NULL,
    final_label_id TEXT
);
CREATE INDEX IF NOT EXISTS idx_records_project ON records(project_id);
CREATE TABLE IF NOT EXISTS annotations (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    record_id TEXT NOT NULL,
    coder_id TEXT NOT NULL,
    label_id TEXT NOT NULL,
    elapsed_ms INTEGER NOT NULL,
    source TEXT NOT NULL,
    created_at REAL NOT NULL,
    superseded INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_annotations_project ON annotations(project_id);
CREATE TABLE IF NOT EXISTS assignments (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    record_id TEXT NOT NULL,
    coder_id TEXT NOT NULL,
    issued_at REAL NOT NULL,
    lease_expires_at REAL NOT NULL,
    displayed_at REAL NOT NULL,
    resolution TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_assignments_project ON assignments(project_id);
CREATE TABLE IF NOT EXISTS batches (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    batch_index INTEGER NOT NULL,
    record_ids TEXT NOT NULL,
    selection_method TEXT NOT NULL,
    status TEXT NOT NULL,
    irr_record_ids TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS snapshots (
    project_id TEXT NOT NULL,
    batch_index INTEGER NOT NULL,
    metrics TEXT NOT NULL,
    model TEXT NOT NULL,
    trained_at REAL NOT NULL,
    PRIMARY KEY (project_id, batch_index)
);
"""


def _settings_to_json(settings: ProjectSettings) -> str:
    return json.dumps(
        {
            "batch_size": settings.batch_size,
            "al_method": settings.al_method.value,
            "irr_enabled": settings.irr_enabled,
            "irr_overlap_percent": settings.irr_overlap_percent,
            "irr_coder_count": settings.irr_coder_count,
            "lease_ttl_seconds": settings.lease_ttl_seconds,
            "max_vocabulary": settings.max_vocabulary,
            "cv_folds": settings.cv_folds,
        }
    )


def _settings_from_json(raw: str) -> ProjectSettings:
    data = json.loads(raw)
    data["al_method"] = ALMethod(data["al_method"])
    return ProjectSettings(**data)


def _vocab_to_json(vocab: Optional[Vocabulary]) -> Optional[str]:
    if vocab is None:
        return None
    return json.dumps(
        {
            "tokens": list(vocab.tokens),
            "document_frequency": list(vocab.document_frequency),
            "corpus_size": vocab.corpus_size,
            "idf": list(vocab.idf),
        }
    )


def _vocab_from_json(raw: Optional[str]) -> Optional[Vocabulary]:
    if raw is None:
        return None
    data = json.loads(raw)
    return Vocabulary(
        tokens=tuple(data["tokens"]),
        document_frequency=tuple(data["document_frequency"]),
        corpus_size=data["corpus_size"],
        idf=tuple(data["idf"]),
    )


def _model_to_json(model: LinearModel) -> str:
    return json.dumps(
        {
            "coefficients": [[float(v) for v in row] for row in model.coefficients],
            "intercepts": [float(v) for v in model.intercepts],
            "classes": list(model.classes),
            "l2_lambda": model.l2_lambda,
        }
    )


def _model_from_json(raw: str) -> LinearModel:
    data = json.loads(raw)
    return LinearModel(
        coefficients=np.asarray(data["coefficients"], dtype=np.float64),
        intercepts=np.asarray(data["intercepts"], dtype=np.float64),
        classes=tuple(data["classes"]),
        l2_lambda=data["l2_lambda"],
    )


class Store:
    """Thread-safe sqlite wrapper; writes are serialized by a process lock on
    top of the coordinator's per-project locks."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._lock = threading.Lock()
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -------------------------------------------------------------- accounts

    def upsert_coder(self, coder: Coder) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO coders (id, username, role) VALUES (?, ?, ?)",
                (coder.id, coder.username, coder.role.value),
            )

    def load_coders(self) -> dict[str, Coder]:
        cur = self._conn.execute("SELECT id, username, role FROM coders")
        return {row[0]: Coder(id=row[0], username=row[1], role=Role(row[2])) for row in cur}

    def upsert_session(self, token: str, coder_id: str, expiry: float) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO sessions (token, coder_id, expiry) VALUES (?, ?, ?)",
                (token, coder_id, expiry),
            )

    def load_sessions(self) -> dict[str, tuple[str, float]]:
        cur = self._conn.execute("SELECT token, coder_id, expiry FROM sessions")
        return {row[0]: (row[1], row[2]) for row in cur}

    # -------------------------------------------------------------- projects

    def create_project(self, state: ProjectState) -> None:
        """Persist a freshly created project with all its rows atomically."""
        project = state.project
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO projects (id, name, description, settings, codebook, created_at, vocabulary)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    project.id,
                    project.name,
                    project.description,
                    _settings_to_json(project.settings),
                    project.codebook,
                    project.created_at,
                    _vocab_to_json(state.vocabulary),
                ),
            )
            for position, label_id in enumerate(state.label_order):
                label = state.labels[label_id]
                self._conn.execute(
                    "INSERT INTO labels (id, project_id, position, name, description) VALUES (?, ?, ?, ?, ?)",
                    (label.id, label.project_id, position, label.name, label.description),
                )
            for coder_id in state.members:
                self._conn.execute(
                    "INSERT OR REPLACE INTO project_members (project_id, coder_id) VALUES (?, ?)",
                    (project.id, coder_id),
                )
            for record in state.records.values():
                self._write_record(project.id, record)
            for annotation in state.annotations.values():
                self._write_annotation(project.id, annotation)

    def update_project_settings(self, project_id: str, settings: ProjectSettings) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE projects SET settings = ? WHERE id = ?",
                (_settings_to_json(settings), project_id),
            )

    def add_member(self, project_id: str, coder_id: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO project_members (project_id, coder_id) VALUES (?, ?)",
                (project_id, coder_id),
            )

    # ------------------------------------------------------------ change sets

    def apply(self, cs: ChangeSet) -> None:
        """Write one coordinator change set in a single transaction."""
        with self._lock, self._conn:
            for record in cs.records:
                self._write_record(cs.project_id, record)
            for annotation in cs.annotations:
                self._write_annotation(cs.project_id, annotation)
            for assignment in cs.assignments:
                self._conn.execute(
                    "INSERT OR REPLACE INTO assignments"
                    " (id, project_id, record_id, coder_id, issued_at, lease_expires_at, displayed_at, resolution)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        assignment.id,
                        cs.project_id,
                        assignment.record_id,
                        assignment.coder_id,
                        assignment.issued_at,
                        assignment.lease_expires_at,
                        assignment.displayed_at,
                        assignment.resolution.value,
                    ),
                )
            for batch in cs.batches:
                self._conn.execute(
                    "INSERT OR REPLACE INTO batches"
                    " (id, project_id, batch_index, record_ids, selection_method, status, irr_record_ids)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (
                        batch.id,
                        cs.project_id,
                        batch.index,
                        json.dumps(list(batch.record_ids)),
                        batch.selection_method.value,
                        batch.status.value,
                        json.dumps(list(batch.irr_record_ids)),
                    ),
                )
            for snapshot in cs.snapshots:
                self._conn.execute(
                    "INSERT OR REPLACE INTO snapshots (project_id, batch_index, metrics, model, trained_at)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (
                        cs.project_id,
                        snapshot.batch_index,
                        json.dumps(snapshot.metrics.as_dict()),
                        _model_to_json(snapshot.model),
                        snapshot.trained_at,
                    ),
                )

    def _write_record(self, project_id: str, record: Record) -> None:
        self._conn.execute(
            "INSERT OR REPLACE INTO records"
            " (id, project_id, external_id, text, status, upload_order, final_label_id)"
            " VALUES (?, ?, ?, ?, ?, ?, ?)",
            (
                record.id,
                project_id,
                record.external_id,
                record.text,
                record.status.value,
                record.upload_order,
                record.final_label_id,
            ),
        )

    def _write_annotation(self, project_id: str, annotation: Annotation) -> None:
        self._conn.execute(
            "INSERT OR REPLACE INTO annotations"
            " (id, project_id, record_id, coder_id, label_id, elapsed_ms, source, created_at, superseded)"
            " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
            (
                annotation.id,
                project_id,
                annotation.record_id,
                annotation.coder_id,
                annotation.label_id,
                annotation.elapsed_ms,
                annotation.source.value,
                annotation.created_at,
                int(annotation.superseded),
            ),
        )

    # ---------------------------------------------------------------- loading

    def load_project_states(self) -> Iterator[ProjectState]:
        cur = self._conn.execute(
            "SELECT id, name, description, settings, codebook, created_at, vocabulary FROM projects"
        )
        for row in cur.fetchall():
            project = Project(
                id=row[0],
                name=row[1],
                description=row[2],
                settings=_settings_from_json(row[3]),
                codebook=row[4],
                created_at=row[5],
            )
            state = ProjectState(
                project=project,
                labels={},
                label_order=[],
                vocabulary=_vocab_from_json(row[6]),
            )
            for lid, name, description in self._conn.execute(
                "SELECT id, name, description FROM labels WHERE project_id = ? ORDER BY position",
                (project.id,),
            ):
                state.labels[lid] = LabelClass(id=lid, project_id=project.id, name=name, description=description)
                state.label_order.append(lid)
            for member_id, in self._conn.execute(
                "SELECT coder_id FROM project_members WHERE project_id = ?", (project.id,)
            ):
                state.members.add(member_id)
            for rid, external_id, text, status, upload_order, final_label_id in self._conn.execute(
                "SELECT id, external_id, text, status, upload_order, final_label_id"
                " FROM records WHERE project_id = ?",
                (project.id,),
            ):
                state.records[rid] = Record(
                    id=rid,
                    project_id=project.id,
                    external_id=external_id,
                    text=text,
                    status=RecordStatus(status),
                    upload_order=upload_order,
                    final_label_id=final_label_id,
                )
            for aid, record_id, coder_id, label_id, elapsed_ms, source, created_at, superseded in self._conn.execute(
                "SELECT id, record_id, coder_id, label_id, elapsed_ms, source, created_at, superseded"
                " FROM annotations WHERE project_id = ?",
                (project.id,),
            ):
                state.annotations[aid] = Annotation(
                    id=aid,
                    record_id=record_id,
                    coder_id=coder_id,
                    label_id=label_id,
                    elapsed_ms=elapsed_ms,
                    source=AnnotationSource(source),
                    created_at=created_at,
                    superseded=bool(superseded),
                )
            for (
                sid,
                record_id,
                coder_id,
                issued_at,
                lease_expires_at,
                displayed_at,
                resolution,
            ) in self._conn.execute(
                "SELECT id, record_id, coder_id, issued_at, lease_expires_at, displayed_at, resolution"
                " FROM assignments WHERE project_id = ?",
                (project.id,),
            ):
                state.assignments[sid] = Assignment(
                    id=sid,
                    record_id=record_id,
                    coder_id=coder_id,
                    issued_at=issued_at,
                    lease_expires_at=lease_expires_at,
                    displayed_at=displayed_at,
                    resolution=AssignmentResolution(resolution),
                )
            for bid, batch_index, record_ids, method, status, irr_record_ids in self._conn.execute(
                "SELECT id, batch_index, record_ids, selection_method, status, irr_record_ids"
                " FROM batches WHERE project_id = ? ORDER BY batch_index",
                (project.id,),
            ):
                state.batches.append(
                    Batch(
                        id=bid,
                        project_id=project.id,
                        index=batch_index,
                        record_ids=tuple(json.loads(record_ids)),
                        selection_method=ALMethod(method),
                        status=BatchStatus(status),
                        irr_record_ids=tuple(json.loads(irr_record_ids)),
                    )
                )
            for batch_index, metrics, model, trained_at in self._conn.execute(
                "SELECT batch_index, metrics, model, trained_at FROM snapshots"
                " WHERE project_id = ? ORDER BY batch_index",
                (project.id,),
            ):
                state.snapshots.append(
                    ModelSnapshot(
                        batch_index=batch_index,
                        metrics=ModelMetrics(**json.loads(metrics)),
                        model=_model_from_json(model),
                        trained_at=trained_at,
                    )
                )
            yield state
