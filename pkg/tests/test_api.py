"""HTTP boundary: auth, role enforcement, endpoint contracts, exports."""

import io
import json
import zipfile

import pytest
from fastapi.testclient import TestClient

from labelforge.api import create_app
from labelforge.domain import Role
from labelforge.service import LabelService


def make_csv(rows, header="ID,Text,Label"):
    return ("\n".join([header] + rows) + "\n").encode("utf-8")


def corpus_rows(n=30, prelabeled=0):
    rows = []
    for i in range(n):
        label = ""
        if i < prelabeled:
            label = "pos" if i % 2 == 0 else "neg"
        topic = "good nice fine" if i % 2 == 0 else "bad poor awful"
        rows.append(f"ext{i},{topic} doc{i},{label}")
    return rows


@pytest.fixture()
def ctx():
    service = LabelService(synchronous_cycles=True)
    admin = service.create_coder("boss", Role.ADMIN)
    admin_token = service.create_session(admin.id)
    client = TestClient(create_app(service))
    yield service, client, admin, admin_token
    service.close()


def auth(token):
    return {"Authorization": f"Bearer {token}"}


def create_project_via_api(client, token, rows=None, settings=None, codebook=None):
    files = {"data": ("corpus.csv", make_csv(rows if rows is not None else corpus_rows()), "text/csv")}
    if codebook is not None:
        files["codebook"] = ("book.pdf", codebook, "application/pdf")
    payload = {
        "name": "demo",
        "description": "a demo project",
        "labels": json.dumps([{"name": "pos"}, {"name": "neg"}]),
        "settings": json.dumps(settings or {"batch_size": 5}),
    }
    return client.post("/api/v1/projects", data=payload, files=files, headers=auth(token))


class TestAuth:
    def test_missing_token_unauthorized(self, ctx):
        _, client, _, _ = ctx
        assert client.get("/api/v1/projects").status_code == 401

    def test_bad_token_unauthorized(self, ctx):
        _, client, _, _ = ctx
        response = client.get("/api/v1/projects", headers=auth("nope"))
        assert response.status_code == 401
        assert response.json()["code"] == "unauthenticated"

    def test_healthz_is_public(self, ctx):
        _, client, _, _ = ctx
        assert client.get("/api/v1/healthz").json() == {"status": "ok"}

    def test_me(self, ctx):
        _, client, _, token = ctx
        body = client.get("/api/v1/me", headers=auth(token)).json()
        assert body["username"] == "boss" and body["role"] == "admin"

    def test_every_protected_route_requires_auth(self, ctx):
        """Endpoint audit: every route under the API prefix except healthz
        rejects anonymous calls."""
        service, client, _, _ = ctx
        app = client.app
        for route in app.routes:
            path = getattr(route, "path", "")
            if not path.startswith("/api/v1") or path.endswith("/healthz"):
                continue
            concrete = path.replace("{project_id}", "x").replace("{assignment_id}", "x")
            concrete = concrete.replace("{annotation_id}", "x").replace("{record_id}", "x")
            for method in route.methods - {"HEAD", "OPTIONS"}:
                response = client.request(method, concrete)
                assert response.status_code == 401, f"{method} {path} -> {response.status_code}"


class TestProjectEndpoints:
    def test_create_project_returns_201_and_batch(self, ctx):
        _, client, _, token = ctx
        response = create_project_via_api(client, token)
        assert response.status_code == 201
        body = response.json()
        assert body["report"]["accepted"] == 30
        assert body["project"]["batches"][0]["status"] == "open"

    def test_create_project_missing_text_column(self, ctx):
        _, client, _, token = ctx
        files = {"data": ("c.csv", b"ID,Body\n1,x\n", "text/csv")}
        payload = {"name": "p", "labels": json.dumps(["a", "b"]), "settings": "{}"}
        response = client.post("/api/v1/projects", data=payload, files=files, headers=auth(token))
        assert response.status_code == 400
        assert "Text" in response.json()["message"]

    def test_create_project_validation_errors(self, ctx):
        _, client, _, token = ctx
        files = {"data": ("c.csv", make_csv(["1,some doc,"]), "text/csv")}
        payload = {"name": "", "labels": json.dumps(["only"]), "settings": "{}"}
        response = client.post("/api/v1/projects", data=payload, files=files, headers=auth(token))
        assert response.status_code == 400
        assert any("fewer than 2" in d for d in response.json()["details"])

    def test_prelabeled_project_selects_by_uncertainty(self, ctx):
        _, client, _, token = ctx
        response = create_project_via_api(client, token, rows=corpus_rows(prelabeled=6))
        batch = response.json()["project"]["batches"][0]
        assert batch["selection_method"] == "least_confident"

    def test_coder_cannot_create_project(self, ctx):
        service, client, admin, token = ctx
        project_id = create_project_via_api(client, token).json()["project_id"]
        body = client.post(
            f"/api/v1/projects/{project_id}/coders",
            json={"username": "carol", "role": "coder"},
            headers=auth(token),
        ).json()
        response = create_project_via_api(client, body["token"])
        assert response.status_code == 403

    def test_oversize_upload_rejected(self, ctx):
        service, client, _, token = ctx
        service.config.upload_max_bytes = 100
        files = {"data": ("c.csv", make_csv([f"{i},text {i}," for i in range(100)]), "text/csv")}
        payload = {"name": "p", "labels": json.dumps(["a", "b"]), "settings": "{}"}
        response = client.post("/api/v1/projects", data=payload, files=files, headers=auth(token))
        assert response.status_code == 413

    def test_get_project_and_membership(self, ctx):
        service, client, _, token = ctx
        project_id = create_project_via_api(client, token).json()["project_id"]
        body = client.get(f"/api/v1/projects/{project_id}", headers=auth(token)).json()
        assert body["name"] == "demo"
        assert {l["name"] for l in body["labels"]} == {"pos", "neg"}
        outsider = service.create_coder("eve", Role.CODER)
        outsider_token = service.create_session(outsider.id)
        response = client.get(f"/api/v1/projects/{project_id}", headers=auth(outsider_token))
        assert response.status_code == 403

    def test_settings_patch_rules(self, ctx):
        _, client, _, token = ctx
        project_id = create_project_via_api(client, token).json()["project_id"]
        ok = client.patch(
            f"/api/v1/projects/{project_id}/settings",
            json={"al_method": "entropy"},
            headers=auth(token),
        )
        assert ok.status_code == 200
        assert ok.json()["settings"]["al_method"] == "entropy"
        frozen = client.patch(
            f"/api/v1/projects/{project_id}/settings",
            json={"batch_size": 99},
            headers=auth(token),
        )
        assert frozen.status_code == 409

    def test_codebook_roundtrip(self, ctx):
        _, client, _, token = ctx
        pdf = b"%PDF-1.4 fake"
        project_id = create_project_via_api(client, token, codebook=pdf).json()["project_id"]
        response = client.get(f"/api/v1/projects/{project_id}/codebook", headers=auth(token))
        assert response.status_code == 200
        assert response.content == pdf


class TestAnnotationFlow:
    def setup_project(self, ctx, **kwargs):
        service, client, admin, token = ctx
        project_id = create_project_via_api(client, token, **kwargs).json()["project_id"]
        body = client.post(
            f"/api/v1/projects/{project_id}/coders",
            json={"username": "alice", "role": "coder"},
            headers=auth(token),
        ).json()
        return project_id, body["token"]

    def test_label_loop(self, ctx):
        _, client, _, admin_token = ctx
        project_id, coder_token = self.setup_project(ctx)
        served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        assert served["assignment"] is not None
        assert served["record"]["text"]
        label_id = served["labels"][0]["id"]
        response = client.post(
            f"/api/v1/assignments/{served['assignment']['id']}/label",
            json={"label_id": label_id},
            headers=auth(coder_token),
        )
        assert response.status_code == 200
        assert response.json()["outcome"] == "finalized"

    def test_replayed_label_conflicts(self, ctx):
        _, client, _, _ = ctx
        project_id, coder_token = self.setup_project(ctx)
        served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        label_id = served["labels"][0]["id"]
        url = f"/api/v1/assignments/{served['assignment']['id']}/label"
        assert client.post(url, json={"label_id": label_id}, headers=auth(coder_token)).status_code == 200
        assert client.post(url, json={"label_id": label_id}, headers=auth(coder_token)).status_code == 409

    def test_unknown_label_is_400(self, ctx):
        _, client, _, _ = ctx
        project_id, coder_token = self.setup_project(ctx)
        served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        response = client.post(
            f"/api/v1/assignments/{served['assignment']['id']}/label",
            json={"label_id": "bogus"},
            headers=auth(coder_token),
        )
        assert response.status_code == 400

    def test_skip_flow_and_admin_queue(self, ctx):
        _, client, _, admin_token = ctx
        project_id, coder_token = self.setup_project(ctx)
        served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        response = client.post(
            f"/api/v1/assignments/{served['assignment']['id']}/skip", headers=auth(coder_token)
        )
        assert response.json()["record_status"] == "pending_skip_adjudication"
        queue = client.get(
            f"/api/v1/projects/{project_id}/admin/skipped", headers=auth(admin_token)
        ).json()["records"]
        assert len(queue) == 1
        record_id = queue[0]["record_id"]
        adjudicated = client.post(
            f"/api/v1/records/{record_id}/adjudicate",
            json={"discard": True},
            headers=auth(admin_token),
        )
        assert adjudicated.json()["record_status"] == "discarded"

    def test_history_and_modify(self, ctx):
        _, client, _, _ = ctx
        project_id, coder_token = self.setup_project(ctx)
        served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        labels = {l["name"]: l["id"] for l in served["labels"]}
        client.post(
            f"/api/v1/assignments/{served['assignment']['id']}/label",
            json={"label_id": labels["pos"]},
            headers=auth(coder_token),
        )
        history = client.get(
            f"/api/v1/projects/{project_id}/history", headers=auth(coder_token)
        ).json()
        assert history["total"] == 1
        annotation_id = history["items"][0]["annotation_id"]
        patched = client.patch(
            f"/api/v1/annotations/{annotation_id}",
            json={"label_id": labels["neg"]},
            headers=auth(coder_token),
        )
        assert patched.status_code == 200
        history = client.get(
            f"/api/v1/projects/{project_id}/history", headers=auth(coder_token)
        ).json()
        assert history["total"] == 1
        assert history["items"][0]["label_name"] == "neg"

    def test_empty_queue_marker(self, ctx):
        _, client, _, _ = ctx
        rows = [f"e{i},small corpus doc{i}," for i in range(2)]
        project_id, coder_token = self.setup_project(ctx, rows=rows, settings={"batch_size": 2})
        for _ in range(2):
            served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
            client.post(
                f"/api/v1/assignments/{served['assignment']['id']}/label",
                json={"label_id": served["labels"][0]["id"]},
                headers=auth(coder_token),
            )
        final = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
        assert final == {"assignment": None}

    def test_admin_label_endpoint(self, ctx):
        service, client, _, admin_token = ctx
        project_id, _ = self.setup_project(ctx)
        coord = service.coordinator(project_id)
        from labelforge.domain import RecordStatus

        unlabeled = next(
            r for r in coord.state.records.values() if r.status is RecordStatus.UNLABELED
        )
        label_id = coord.state.label_order[1]
        response = client.post(
            f"/api/v1/records/{unlabeled.id}/admin-label",
            json={"label_id": label_id},
            headers=auth(admin_token),
        )
        assert response.json()["record_status"] == "labeled"

    def test_coder_denied_admin_endpoints(self, ctx):
        _, client, _, _ = ctx
        project_id, coder_token = self.setup_project(ctx)
        for method, url, body in [
            ("get", f"/api/v1/projects/{project_id}/admin/skipped", None),
            ("get", f"/api/v1/projects/{project_id}/metrics/labels", None),
            ("get", f"/api/v1/projects/{project_id}/export/data", None),
            ("patch", f"/api/v1/projects/{project_id}/settings", {"al_method": "entropy"}),
        ]:
            kwargs = {"headers": auth(coder_token)}
            if body is not None:
                kwargs["json"] = body
            response = getattr(client, method)(url, **kwargs)
            assert response.status_code == 403, url


class TestMetricsEndpoints:
    def label_batch(self, service, client, project_id, coder_token, n=5):
        # alternate labels so retraining always sees two classes
        for i in range(n):
            served = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(coder_token)).json()
            if served["assignment"] is None:
                break
            target = served["labels"][i % 2]["id"]
            client.post(
                f"/api/v1/assignments/{served['assignment']['id']}/label",
                json={"label_id": target},
                headers=auth(coder_token),
            )

    def test_labels_and_timing_metrics(self, ctx):
        service, client, admin, admin_token = ctx
        project_id = create_project_via_api(client, admin_token).json()["project_id"]
        body = client.post(
            f"/api/v1/projects/{project_id}/coders",
            json={"username": "alice", "role": "coder"},
            headers=auth(admin_token),
        ).json()
        self.label_batch(service, client, project_id, body["token"])
        labels = client.get(
            f"/api/v1/projects/{project_id}/metrics/labels", headers=auth(admin_token)
        ).json()
        assert labels["coders"][0]["username"] == "alice"
        assert sum(labels["coders"][0]["counts"].values()) == 5
        timing = client.get(
            f"/api/v1/projects/{project_id}/metrics/timing", headers=auth(admin_token)
        ).json()
        stats = timing["coders"][0]
        assert stats["minimum"] <= stats["q1"] <= stats["median"] <= stats["q3"] <= stats["maximum"]

    def test_model_metrics_series(self, ctx):
        service, client, admin, admin_token = ctx
        project_id = create_project_via_api(client, admin_token).json()["project_id"]
        body = client.post(
            f"/api/v1/projects/{project_id}/coders",
            json={"username": "alice", "role": "coder"},
            headers=auth(admin_token),
        ).json()
        series = client.get(
            f"/api/v1/projects/{project_id}/metrics/model", headers=auth(admin_token)
        ).json()
        assert series == {"enabled": True, "series": []}
        self.label_batch(service, client, project_id, body["token"])
        series = client.get(
            f"/api/v1/projects/{project_id}/metrics/model", headers=auth(admin_token)
        ).json()
        assert len(series["series"]) == 1
        assert series["series"][0]["batch_index"] == 0

    def test_irr_disabled_marker(self, ctx):
        _, client, _, admin_token = ctx
        project_id = create_project_via_api(client, admin_token).json()["project_id"]
        body = client.get(
            f"/api/v1/projects/{project_id}/metrics/irr", headers=auth(admin_token)
        ).json()
        assert body == {"enabled": False}

    def test_irr_flow_end_to_end(self, ctx):
        """Two coders double-code one record, disagree, and the admin
        adjudicates; kappa reflects coder votes only."""
        service, client, admin, admin_token = ctx
        response = create_project_via_api(
            client,
            admin_token,
            settings={"batch_size": 5, "irr_enabled": True, "irr_overlap_percent": 20},
        )
        project_id = response.json()["project_id"]
        tokens = {}
        for name in ("alice", "bob"):
            body = client.post(
                f"/api/v1/projects/{project_id}/coders",
                json={"username": name, "role": "coder"},
                headers=auth(admin_token),
            ).json()
            tokens[name] = body["token"]
        # alice labels her whole queue: 4 single-coded records plus the first
        # vote on the double-coded one
        outcomes = []
        labels = None
        double_record = None
        while True:
            served = client.get(
                f"/api/v1/projects/{project_id}/next", headers=auth(tokens["alice"])
            ).json()
            if served["assignment"] is None:
                break
            labels = {l["name"]: l["id"] for l in served["labels"]}
            result = client.post(
                f"/api/v1/assignments/{served['assignment']['id']}/label",
                json={"label_id": labels["pos"]},
                headers=auth(tokens["alice"]),
            ).json()
            outcomes.append(result["outcome"])
            if result["outcome"] == "awaiting_coders":
                double_record = served["record"]["id"]
        assert outcomes.count("awaiting_coders") == 1
        # bob's only available record is the double-coded one
        served_b = client.get(f"/api/v1/projects/{project_id}/next", headers=auth(tokens["bob"])).json()
        assert served_b["record"]["id"] == double_record
        response = client.post(
            f"/api/v1/assignments/{served_b['assignment']['id']}/label",
            json={"label_id": labels["neg"]},
            headers=auth(tokens["bob"]),
        )
        assert response.json()["outcome"] == "conflict_queued"
        queue = client.get(
            f"/api/v1/projects/{project_id}/admin/disagreements", headers=auth(admin_token)
        ).json()["records"]
        assert len(queue) == 1
        votes = {v["username"]: v["label_name"] for v in queue[0]["votes"]}
        assert votes == {"alice": "pos", "bob": "neg"}
        client.post(
            f"/api/v1/records/{queue[0]['record_id']}/adjudicate",
            json={"label_id": labels["pos"]},
            headers=auth(admin_token),
        )
        irr = client.get(
            f"/api/v1/projects/{project_id}/metrics/irr", headers=auth(admin_token)
        ).json()
        assert irr["enabled"] is True
        assert irr["statistic"] == "cohens_kappa"
        assert irr["double_coded_items"] == 1
        assert irr["matrix"]["labels"] == ["pos", "neg"]
        assert irr["pairwise"][0]["agreement"] == 0.0


class TestExports:
    def test_data_export_sorted(self, ctx):
        service, client, admin, admin_token = ctx
        project_id = create_project_via_api(client, admin_token, rows=corpus_rows(prelabeled=6)).json()[
            "project_id"
        ]
        response = client.get(
            f"/api/v1/projects/{project_id}/export/data", headers=auth(admin_token)
        )
        assert response.status_code == 200
        assert response.headers["content-type"] == "application/zip"
        with zipfile.ZipFile(io.BytesIO(response.content)) as zf:
            lines = zf.read("labeled_data.csv").decode().strip().splitlines()
        labels = [line.rsplit(",", 1)[1] for line in lines[1:]]
        assert labels == sorted(labels)

    def test_model_export_before_training_404(self, ctx):
        _, client, _, admin_token = ctx
        project_id = create_project_via_api(client, admin_token).json()["project_id"]
        response = client.get(
            f"/api/v1/projects/{project_id}/export/model", headers=auth(admin_token)
        )
        assert response.status_code == 404

    def test_model_export_bundle_contents(self, ctx):
        service, client, admin, admin_token = ctx
        project_id = create_project_via_api(client, admin_token).json()["project_id"]
        body = client.post(
            f"/api/v1/projects/{project_id}/coders",
            json={"username": "alice", "role": "coder"},
            headers=auth(admin_token),
        ).json()
        TestMetricsEndpoints().label_batch(service, client, project_id, body["token"])
        response = client.get(
            f"/api/v1/projects/{project_id}/export/model", headers=auth(admin_token)
        )
        assert response.status_code == 200
        with zipfile.ZipFile(io.BytesIO(response.content)) as zf:
            assert sorted(zf.namelist()) == ["README.md", "model.json", "vectorizer.json"]
