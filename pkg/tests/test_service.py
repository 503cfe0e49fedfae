import base64
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from visioblend import images
from visioblend.schedule import make_schedule
from visioblend.service import JobStore, SamplerBundle, create_app
from visioblend.unet import UNet

from conftest import micro_net_config

SIZE = 8


def _bundle():
    torch.manual_seed(0)
    model = UNet(micro_net_config())
    return SamplerBundle(model=model, sched=make_schedule(4, 0.01, 0.1),
                         height=SIZE, width=SIZE)


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app(bundle=_bundle())) as c:
        yield c


def _png_b64(h=SIZE, w=SIZE, channels=3, value=0.5):
    return base64.b64encode(images.encode_png(np.full((h, w, channels), value, np.float32))).decode()


def _wait(client, job_id, timeout=30.0):
    t0 = time.monotonic()
    while time.monotonic() - t0 < timeout:
        body = client.get(f"/api/v1/jobs/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} did not finish: {body}")


# ------------------------------------------------------------------ JobStore

def test_job_store_transitions_are_forward_only():
    store = JobStore()
    rec = store.create()
    assert rec.status == "queued" and rec.progress == 0.0
    store.update(rec.job_id, status="running", progress=0.5)
    with pytest.raises(ValueError):
        store.update(rec.job_id, status="queued")  # backwards
    assert store.get(rec.job_id).status == "running"
    store.update(rec.job_id, status="done", progress=1.0)
    with pytest.raises(ValueError):
        store.update(rec.job_id, status="running")  # out of terminal
    got = store.get(rec.job_id)
    assert got.status == "done"
    assert got.finished_at is not None


def test_job_store_returns_copies():
    store = JobStore()
    rec = store.create()
    got = store.get(rec.job_id)
    got.status = "done"
    assert store.get(rec.job_id).status == "queued"


def test_job_store_retention_with_fake_clock():
    now = [1000.0]
    store = JobStore(retention_s=600.0, clock=lambda: now[0])
    rec = store.create()
    store.update(rec.job_id, status="done")
    now[0] += 599.0
    store.evict_expired()
    assert store.get(rec.job_id) is not None
    now[0] += 2.0
    store.evict_expired()
    assert store.get(rec.job_id) is None
    # unfinished jobs are never evicted on age alone
    rec2 = store.create()
    now[0] += 10_000.0
    store.evict_expired()
    assert store.get(rec2.job_id) is not None


# ----------------------------------------------------------------- endpoints

def test_models_endpoint_reports_resolution(client):
    body = client.get("/api/v1/models").json()
    assert body["models"] == [
        {"id": "default", "height": SIZE, "width": SIZE, "steps": 4}
    ]


def test_generate_unconditional_completes(client):
    r = client.post("/api/v1/generate", json={"seed": 1})
    assert r.status_code == 202
    job_id = r.json()["job_id"]
    body = _wait(client, job_id)
    assert body["status"] == "done"
    assert body["progress"] == 1.0
    img = images.decode_png(base64.b64decode(body["result_png"]), channels=3)
    assert img.shape == (SIZE, SIZE, 3)
    assert img.min() >= -1.0 and img.max() <= 1.0


def test_generate_is_seed_deterministic(client):
    req = {"seed": 7, "sketch_png": _png_b64(channels=1, value=-1.0),
           "stroke_png": _png_b64(), "s_sketch": 2.0, "s_stroke": 1.0}
    pngs = []
    for _ in range(2):
        job_id = client.post("/api/v1/generate", json=req).json()["job_id"]
        pngs.append(_wait(client, job_id)["result_png"])
    assert pngs[0] == pngs[1]


def test_generate_with_realism_uses_stroke_as_reference(client):
    req = {"seed": 3, "stroke_png": _png_b64(value=0.8), "realism": 0.5}
    job_id = client.post("/api/v1/generate", json=req).json()["job_id"]
    assert _wait(client, job_id)["status"] == "done"


def test_progress_is_monotone(client):
    job_id = client.post("/api/v1/generate", json={"seed": 2}).json()["job_id"]
    seen = []
    for _ in range(2000):
        body = client.get(f"/api/v1/jobs/{job_id}").json()
        seen.append(body["progress"])
        if body["status"] == "done":
            break
        time.sleep(0.001)
    assert body["status"] == "done"
    assert all(b >= a for a, b in zip(seen, seen[1:]))
    assert seen[-1] == 1.0


def test_field_addressed_errors(client):
    cases = [
        ({"s_sketch": -1.0}, "s_sketch"),
        ({"s_stroke": "big"}, "s_stroke"),
        ({"realism": 1.5}, "realism"),
        ({"seed": 1.25}, "seed"),
        ({"steps": 0}, "steps"),
        ({"sketch_png": "!!!"}, "sketch_png"),
        ({"realism": 0.5}, "realism"),  # no reference or stroke to refine toward
    ]
    for payload, field in cases:
        r = client.post("/api/v1/generate", json=payload)
        assert r.status_code == 400, payload
        body = r.json()
        assert body["field"] == field
        assert "error" in body


def test_size_mismatch_names_expected_dimensions(client):
    r = client.post("/api/v1/generate", json={"stroke_png": _png_b64(h=16, w=16)})
    assert r.status_code == 400
    body = r.json()
    assert body["field"] == "stroke_png"
    assert f"{SIZE}x{SIZE}" in body["error"]
    assert "16x16" in body["error"]


def test_malformed_and_oversized_bodies(client):
    r = client.post("/api/v1/generate", content=b"{not json",
                    headers={"content-type": "application/json"})
    assert r.status_code == 400
    r = client.post("/api/v1/generate", json=[1, 2, 3])
    assert r.status_code == 400
    r = client.post("/api/v1/generate", content=b"x" * (8 * 1024 * 1024 + 1),
                    headers={"content-type": "application/json"})
    assert r.status_code == 400
    assert "too large" in r.json()["error"]


def test_unknown_job_id_is_404(client):
    r = client.get("/api/v1/jobs/no-such-job")
    assert r.status_code == 404
    assert r.json() == {"error": "unknown job id"}


def test_no_model_loaded_is_503():
    with TestClient(create_app(bundle=None)) as c:
        r = c.post("/api/v1/generate", json={})
        assert r.status_code == 503
        assert c.get("/api/v1/models").json() == {"models": []}


def test_bool_is_not_a_number(client):
    r = client.post("/api/v1/generate", json={"s_sketch": True})
    assert r.status_code == 400
    assert r.json()["field"] == "s_sketch"


def test_static_ui_mount(tmp_path):
    (tmp_path / "index.html").write_text("<html><body>canvas</body></html>")
    with TestClient(create_app(bundle=None, static_dir=tmp_path)) as c:
        r = c.get("/")
        assert r.status_code == 200
        assert "canvas" in r.text
        # API routes still win over the static mount
        assert c.get("/api/v1/models").status_code == 200
