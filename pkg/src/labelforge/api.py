"""HTTP JSON boundary: authentication, role enforcement, and thin stateless
mappings from endpoints onto the service and coordinator operations."""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import Depends, FastAPI, File, Form, Request, Response, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .coordinator import Coordinator
from .domain import ALMethod, Coder, ProjectSettings, Role
from .errors import (
    AuthenticationError,
    LabelForgeError,
    ModelUnavailable,
    NotFound,
    PermissionDenied,
    StateConflict,
    UploadError,
    ValidationFailure,
)
from .export import export_labeled_zip, export_model_bundle
from .service import LabelService
from .domain import utcnow

API_PREFIX = "/api/v1"

_STATUS_BY_ERROR: list[tuple[type, int]] = [
    (AuthenticationError, 401),
    (PermissionDenied, 403),
    (NotFound, 404),
    (ModelUnavailable, 404),
    (StateConflict, 409),
    (ValidationFailure, 400),
    (UploadError, 400),
    (LabelForgeError, 409),
]


def _error_response(exc: LabelForgeError) -> JSONResponse:
    for cls, status in _STATUS_BY_ERROR:
        if isinstance(exc, cls):
            details = exc.errors if isinstance(exc, ValidationFailure) else []
            return JSONResponse(
                status_code=status,
                content={"code": exc.code, "message": str(exc), "details": details},
            )
    raise exc


def parse_settings(data: dict) -> ProjectSettings:
    known = {
        "batch_size",
        "al_method",
        "irr_enabled",
        "irr_overlap_percent",
        "irr_coder_count",
        "lease_ttl_seconds",
        "max_vocabulary",
        "cv_folds",
    }
    unknown = set(data) - known
    if unknown:
        raise ValidationFailure([f"unknown setting: {k}" for k in sorted(unknown)])
    fields = dict(data)
    if "al_method" in fields:
        try:
            fields["al_method"] = ALMethod(fields["al_method"])
        except ValueError:
            raise ValidationFailure([f"unknown al_method: {fields['al_method']!r}"]) from None
    try:
        return ProjectSettings(**fields)
    except TypeError as exc:
        raise ValidationFailure([str(exc)]) from None


def create_app(service: LabelService) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        service.start_background_tasks()
        yield

    app = FastAPI(title="labelforge", lifespan=lifespan)

    @app.exception_handler(LabelForgeError)
    async def handle_domain_error(request: Request, exc: LabelForgeError):
        return _error_response(exc)

    def current_coder(request: Request) -> Coder:
        header = request.headers.get("authorization", "")
        token = header[7:].strip() if header.lower().startswith("bearer ") else None
        return service.authenticate(token)

    def project_json(coord: Coordinator) -> dict:
        state = coord.state
        settings = state.project.settings
        with coord.lock:
            batches = [
                {
                    "index": b.index,
                    "selection_method": b.selection_method.value,
                    "status": b.status.value,
                    "size": len(b.record_ids),
                    "double_coded": len(b.irr_record_ids),
                }
                for b in state.batches
            ]
            members = sorted(state.members)
        return {
            "id": state.project.id,
            "name": state.project.name,
            "description": state.project.description,
            "created_at": state.project.created_at,
            "settings": {
                "batch_size": settings.batch_size,
                "al_method": settings.al_method.value,
                "irr_enabled": settings.irr_enabled,
                "irr_overlap_percent": settings.irr_overlap_percent,
                "irr_coder_count": settings.irr_coder_count,
                "lease_ttl_seconds": settings.lease_ttl_seconds,
                "max_vocabulary": settings.max_vocabulary,
                "cv_folds": settings.cv_folds,
            },
            "labels": [
                {
                    "id": lid,
                    "name": state.labels[lid].name,
                    "description": state.labels[lid].description,
                }
                for lid in state.label_order
            ],
            "status_counts": coord.status_counts(),
            "batches": batches,
            "members": [
                {
                    "id": cid,
                    "username": service.coders[cid].username,
                    "role": service.coders[cid].role.value,
                }
                for cid in members
                if cid in service.coders
            ],
            "has_codebook": state.project.codebook is not None,
            "snapshot_count": len(state.snapshots),
        }

    # ------------------------------------------------------------- lifecycle

    @app.get(API_PREFIX + "/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.get(API_PREFIX + "/me")
    async def me(coder: Coder = Depends(current_coder)):
        return {"id": coder.id, "username": coder.username, "role": coder.role.value}

    @app.get(API_PREFIX + "/projects")
    async def list_projects(coder: Coder = Depends(current_coder)):
        result = []
        for project_id in service.project_ids():
            coord = service.coordinator(project_id)
            if coder.id in coord.state.members:
                result.append(project_json(coord))
        return {"projects": result}

    @app.post(API_PREFIX + "/projects", status_code=201)
    async def create_project(
        coder: Coder = Depends(current_coder),
        name: str = Form(""),
        description: str = Form(""),
        labels: str = Form("[]"),
        settings: str = Form("{}"),
        data: UploadFile = File(...),
        codebook: Optional[UploadFile] = File(None),
    ):
        csv_bytes = await data.read()
        if len(csv_bytes) > service.config.upload_max_bytes:
            return JSONResponse(
                status_code=413,
                content={"code": "payload_too_large", "message": "upload exceeds size cap", "details": []},
            )
        try:
            label_defs_raw = json.loads(labels)
            settings_raw = json.loads(settings)
        except json.JSONDecodeError as exc:
            raise ValidationFailure([f"labels/settings must be JSON: {exc}"]) from None
        label_defs = []
        for item in label_defs_raw:
            if isinstance(item, str):
                label_defs.append((item, ""))
            else:
                label_defs.append((item.get("name", ""), item.get("description", "")))
        project_settings = parse_settings(settings_raw)
        codebook_bytes = await codebook.read() if codebook is not None else None
        state, report = service.create_project(
            coder,
            name=name,
            description=description,
            label_defs=label_defs,
            settings=project_settings,
            csv_bytes=csv_bytes,
            codebook=codebook_bytes,
        )
        return {
            "project_id": state.project.id,
            "report": report.as_dict(),
            "project": project_json(service.coordinator(state.project.id)),
        }

    @app.get(API_PREFIX + "/projects/{project_id}")
    async def get_project(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_member(project_id, coder)
        return project_json(coord)

    @app.patch(API_PREFIX + "/projects/{project_id}/settings")
    async def patch_settings(project_id: str, request: Request, coder: Coder = Depends(current_coder)):
        updates = await request.json()
        settings = service.update_settings(project_id, coder, updates)
        return {
            "settings": {
                "batch_size": settings.batch_size,
                "al_method": settings.al_method.value,
                "irr_enabled": settings.irr_enabled,
                "irr_overlap_percent": settings.irr_overlap_percent,
                "irr_coder_count": settings.irr_coder_count,
                "lease_ttl_seconds": settings.lease_ttl_seconds,
                "max_vocabulary": settings.max_vocabulary,
                "cv_folds": settings.cv_folds,
            }
        }

    @app.post(API_PREFIX + "/projects/{project_id}/coders", status_code=201)
    async def add_coder(project_id: str, request: Request, coder: Coder = Depends(current_coder)):
        body = await request.json()
        username = body.get("username", "")
        if not username:
            raise ValidationFailure(["username is required"])
        try:
            role = Role(body.get("role", "coder"))
        except ValueError:
            raise ValidationFailure([f"unknown role: {body.get('role')!r}"]) from None
        member, token = service.add_project_member(project_id, coder, username, role)
        return {"coder_id": member.id, "username": member.username, "role": member.role.value, "token": token}

    # ------------------------------------------------------------ annotation

    @app.get(API_PREFIX + "/projects/{project_id}/next")
    async def next_assignment(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "annotate")
        served = coord.next_assignment(coder.id, now=utcnow())
        if served is None:
            return {"assignment": None}
        assignment, record = served
        state = coord.state
        return {
            "assignment": {
                "id": assignment.id,
                "record_id": record.id,
                "lease_expires_at": assignment.lease_expires_at,
            },
            "record": {"id": record.id, "text": record.text},
            "labels": [
                {"id": lid, "name": state.labels[lid].name, "description": state.labels[lid].description}
                for lid in state.label_order
            ],
            "codebook_url": (
                f"{API_PREFIX}/projects/{project_id}/codebook"
                if state.project.codebook is not None
                else None
            ),
        }

    @app.post(API_PREFIX + "/assignments/{assignment_id}/label")
    async def submit_label(assignment_id: str, request: Request, coder: Coder = Depends(current_coder)):
        body = await request.json()
        label_id = body.get("label_id")
        if not label_id:
            raise ValidationFailure(["label_id is required"])
        project_id = service.find_assignment_project(assignment_id)
        coord = service.require_permission(project_id, coder, "annotate")
        result = coord.submit_label(assignment_id, label_id, coder.id, now=utcnow())
        service.handle_submit_result(project_id, result)
        return {
            "outcome": result.outcome.value,
            "record_status": result.record.status.value,
            "annotation_id": result.annotation.id,
        }

    @app.post(API_PREFIX + "/assignments/{assignment_id}/skip")
    async def skip_assignment(assignment_id: str, coder: Coder = Depends(current_coder)):
        project_id = service.find_assignment_project(assignment_id)
        coord = service.require_permission(project_id, coder, "annotate")
        record = coord.skip(assignment_id, coder.id, now=utcnow())
        return {"record_status": record.status.value}

    @app.get(API_PREFIX + "/projects/{project_id}/history")
    async def history(
        project_id: str,
        page: int = 1,
        page_size: int = 50,
        coder: Coder = Depends(current_coder),
    ):
        coord = service.require_permission(project_id, coder, "view_history")
        items = coord.history(coder.id)
        total = len(items)
        start = max(0, (page - 1) * page_size)
        chunk = items[start : start + page_size]
        state = coord.state
        return {
            "total": total,
            "page": page,
            "page_size": page_size,
            "items": [
                {
                    "annotation_id": a.id,
                    "record_id": a.record_id,
                    "text": state.records[a.record_id].text,
                    "label_id": a.label_id,
                    "label_name": state.labels[a.label_id].name,
                    "elapsed_ms": a.elapsed_ms,
                    "source": a.source.value,
                    "created_at": a.created_at,
                }
                for a in chunk
            ],
        }

    @app.patch(API_PREFIX + "/annotations/{annotation_id}")
    async def modify_annotation(annotation_id: str, request: Request, coder: Coder = Depends(current_coder)):
        body = await request.json()
        label_id = body.get("label_id")
        if not label_id:
            raise ValidationFailure(["label_id is required"])
        project_id = service.find_annotation_project(annotation_id)
        coord = service.require_permission(project_id, coder, "view_history")
        replacement = coord.modify_annotation(annotation_id, coder.id, label_id, now=utcnow())
        return {"annotation_id": replacement.id, "label_id": replacement.label_id}

    # ----------------------------------------------------------- admin flows

    @app.get(API_PREFIX + "/projects/{project_id}/admin/skipped")
    async def skipped_queue(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "resolve_skips")
        state = coord.state
        return {
            "records": [
                {
                    "record_id": r.id,
                    "text": r.text,
                    "votes": _votes_json(coord, r.id),
                }
                for r in coord.skipped_queue()
            ]
        }

    @app.get(API_PREFIX + "/projects/{project_id}/admin/disagreements")
    async def disagreement_queue(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "adjudicate_irr")
        return {
            "records": [
                {
                    "record_id": record.id,
                    "text": record.text,
                    "votes": _votes_json(coord, record.id),
                }
                for record, _ in coord.disagreement_queue()
            ]
        }

    def _votes_json(coord: Coordinator, record_id: str) -> list[dict]:
        state = coord.state
        votes = []
        for annotation in state.annotations.values():
            if annotation.record_id != record_id or annotation.superseded:
                continue
            member = service.coders.get(annotation.coder_id)
            votes.append(
                {
                    "coder_id": annotation.coder_id,
                    "username": member.username if member else annotation.coder_id,
                    "label_id": annotation.label_id,
                    "label_name": state.labels[annotation.label_id].name,
                    "source": annotation.source.value,
                }
            )
        return votes

    @app.post(API_PREFIX + "/records/{record_id}/adjudicate")
    async def adjudicate(record_id: str, request: Request, coder: Coder = Depends(current_coder)):
        body = await request.json()
        project_id = service.find_record_project(record_id)
        coord = service.require_permission(project_id, coder, "resolve_skips")
        record, batch_completed = coord.adjudicate(
            record_id,
            coder.id,
            now=utcnow(),
            label_id=body.get("label_id"),
            discard=bool(body.get("discard", False)),
        )
        if batch_completed:
            service.schedule_cycle(project_id)
        return {"record_status": record.status.value}

    @app.post(API_PREFIX + "/records/{record_id}/discard")
    async def discard_record(record_id: str, coder: Coder = Depends(current_coder)):
        project_id = service.find_record_project(record_id)
        coord = service.require_permission(project_id, coder, "discard")
        record, batch_completed = coord.discard(record_id, coder.id, now=utcnow())
        if batch_completed:
            service.schedule_cycle(project_id)
        return {"record_status": record.status.value}

    @app.post(API_PREFIX + "/records/{record_id}/admin-label")
    async def admin_label(record_id: str, request: Request, coder: Coder = Depends(current_coder)):
        body = await request.json()
        label_id = body.get("label_id")
        if not label_id:
            raise ValidationFailure(["label_id is required"])
        project_id = service.find_record_project(record_id)
        coord = service.require_permission(project_id, coder, "admin_label")
        record, batch_completed = coord.admin_label(record_id, label_id, coder.id, now=utcnow())
        if batch_completed:
            service.schedule_cycle(project_id)
        return {"record_status": record.status.value}

    # --------------------------------------------------------------- metrics

    @app.get(API_PREFIX + "/projects/{project_id}/metrics/labels")
    async def metrics_labels(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "view_dashboard")
        state = coord.state
        distribution = coord.label_distribution()
        return {
            "coders": [
                {
                    "coder_id": coder_id,
                    "username": service.coders[coder_id].username
                    if coder_id in service.coders
                    else coder_id,
                    "counts": {
                        state.labels[label_id].name: count for label_id, count in per_label.items()
                    },
                }
                for coder_id, per_label in sorted(distribution.items())
            ]
        }

    @app.get(API_PREFIX + "/projects/{project_id}/metrics/timing")
    async def metrics_timing(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "view_dashboard")
        stats = coord.timing_stats()
        return {
            "coders": [
                {
                    "coder_id": coder_id,
                    "username": service.coders[coder_id].username
                    if coder_id in service.coders
                    else coder_id,
                    "minimum": s.minimum,
                    "q1": s.q1,
                    "median": s.median,
                    "q3": s.q3,
                    "maximum": s.maximum,
                    "outliers": list(s.outliers),
                }
                for coder_id, s in sorted(stats.items())
            ]
        }

    @app.get(API_PREFIX + "/projects/{project_id}/metrics/model")
    async def metrics_model(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "view_dashboard")
        enabled = coord.state.project.settings.al_method is not ALMethod.RANDOM
        with coord.lock:
            series = [
                {
                    "batch_index": s.batch_index,
                    "accuracy": s.metrics.accuracy,
                    "macro_precision": s.metrics.macro_precision,
                    "macro_recall": s.metrics.macro_recall,
                    "macro_f1": s.metrics.macro_f1,
                    "trained_at": s.trained_at,
                }
                for s in coord.state.snapshots
            ]
        return {"enabled": enabled, "series": series}

    @app.get(API_PREFIX + "/projects/{project_id}/metrics/irr")
    async def metrics_irr(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "view_dashboard")
        state = coord.state
        if not state.project.settings.irr_enabled:
            return {"enabled": False}
        summary = service.irr_report(project_id)
        label_names = [state.labels[lid].name for lid in summary.categories]
        usernames = {cid: c.username for cid, c in service.coders.items()}
        return {
            "enabled": True,
            "statistic": summary.statistic,
            "kappa": summary.kappa,
            "percent_overall": summary.percent_overall,
            "double_coded_items": summary.double_coded_items,
            "pairwise": [
                {
                    "coder_a": usernames.get(a, a),
                    "coder_b": usernames.get(b, b),
                    "agreement": agreement,
                    "items": items,
                }
                for (a, b), (agreement, items) in sorted(summary.pairwise.items())
            ],
            "matrix": {
                "labels": label_names,
                "counts": [[int(v) for v in row] for row in summary.matrix],
            },
        }

    # ---------------------------------------------------------------- export

    @app.get(API_PREFIX + "/projects/{project_id}/export/data")
    async def export_data(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "export")
        with coord.lock:
            payload = export_labeled_zip(coord.state)
        return Response(
            content=payload,
            media_type="application/zip",
            headers={"Content-Disposition": 'attachment; filename="labeled_data.zip"'},
        )

    @app.get(API_PREFIX + "/projects/{project_id}/export/model")
    async def export_model(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_permission(project_id, coder, "export")
        with coord.lock:
            payload = export_model_bundle(coord.state)
        return Response(
            content=payload,
            media_type="application/zip",
            headers={"Content-Disposition": 'attachment; filename="model_bundle.zip"'},
        )

    @app.get(API_PREFIX + "/projects/{project_id}/codebook")
    async def codebook(project_id: str, coder: Coder = Depends(current_coder)):
        coord = service.require_member(project_id, coder)
        if coord.state.project.codebook is None:
            raise NotFound("project has no codebook")
        return Response(content=coord.state.project.codebook, media_type="application/pdf")

    if service.config.static_dir is not None:
        app.mount("/", StaticFiles(directory=str(service.config.static_dir), html=True), name="ui")

    return app
