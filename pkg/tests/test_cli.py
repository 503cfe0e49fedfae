import json

import numpy as np
import pytest

from visioblend import images
from visioblend.cli import main
from visioblend.training import load_checkpoint

from conftest import shape_image

SIZE = 8


def _write_corpus(root, n=3):
    recs = []
    for i in range(n):
        images.save_png(shape_image(i, size=SIZE), root / f"img{i}.png")
        recs.append({"id": f"img{i}", "image": f"img{i}.png"})
    (root / "manifest.jsonl").write_text("".join(json.dumps(r) + "\n" for r in recs))


def _write_train_config(root, **overrides):
    cfg = {
        "manifest": "manifest.jsonl",
        "image_size": SIZE,
        "out_dir": "run",
        "network": {"base_channels": 4, "channel_multipliers": [1],
                    "residual_blocks_per_level": 1, "time_embed_dim": 8},
        "schedule": {"T": 4, "beta_start": 0.01, "beta_end": 0.1},
        "steps": 3,
        "batch_size": 2,
        "learning_rate": 1e-3,
        "seed": 0,
    }
    cfg.update(overrides)
    (root / "config.json").write_text(json.dumps(cfg))
    return root / "config.json"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One stage-1 run shared by the sample/evaluate/serve-adjacent tests."""
    root = tmp_path_factory.mktemp("cli")
    _write_corpus(root)
    cfg = _write_train_config(root)
    assert main(["train", "--config", str(cfg), "--stage", "1"]) == 0
    return root


def test_train_writes_checkpoint_and_log(trained):
    ckpt = trained / "run" / "last.ckpt"
    assert ckpt.exists()
    state, sched, meta = load_checkpoint(ckpt)
    assert state.step == 3
    assert sched.T == 4
    assert meta["image_size"] == [SIZE, SIZE]
    log = [json.loads(l) for l in (trained / "run" / "train_log.jsonl").read_text().splitlines()]
    assert [e["step"] for e in log] == [1, 2, 3]


def test_stage2_requires_resume(trained, capsys):
    cfg = trained / "config.json"
    assert main(["train", "--config", str(cfg), "--stage", "2"]) == 2
    assert "--resume" in capsys.readouterr().err


def test_stage2_resumes_from_stage1(trained):
    cfg = trained / "config.json"
    ckpt = trained / "run" / "last.ckpt"
    assert main(["train", "--config", str(cfg), "--stage", "2",
                 "--resume", str(ckpt)]) == 0
    state, _, meta = load_checkpoint(ckpt)
    assert state.step == 6
    assert meta["stage"] == 2


def test_sample_is_deterministic(trained, tmp_path):
    ckpt = trained / "run" / "last.ckpt"
    outs = [tmp_path / "a.png", tmp_path / "b.png"]
    for out in outs:
        assert main(["sample", "--ckpt", str(ckpt), "--seed", "11",
                     "--out", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    img = images.load_png(outs[0], channels=3)
    assert img.shape == (SIZE, SIZE, 3)


def test_sample_conditioned_with_realism(trained, tmp_path):
    ckpt = trained / "run" / "last.ckpt"
    sketch = tmp_path / "sk.png"
    stroke = tmp_path / "st.png"
    images.save_png(np.where(shape_image(0, SIZE)[:, :, :1] > 0, 1.0, -1.0).astype(np.float32), sketch)
    images.save_png(shape_image(0, SIZE), stroke)
    out = tmp_path / "cond.png"
    rc = main(["sample", "--ckpt", str(ckpt), "--sketch", str(sketch),
               "--stroke", str(stroke), "--s-sketch", "2.0", "--s-stroke", "1.0",
               "--realism", "0.5", "--seed", "3", "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_sample_realism_without_reference_or_stroke_fails(trained, tmp_path, capsys):
    ckpt = trained / "run" / "last.ckpt"
    rc = main(["sample", "--ckpt", str(ckpt), "--realism", "0.5",
               "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_extract_conditions(trained, tmp_path):
    out_dir = tmp_path / "cond"
    assert main(["extract-conditions", "--in", str(trained), "--out", str(out_dir)]) == 0
    for i in range(3):
        sk = images.load_png(out_dir / f"img{i}_sketch.png", channels=1)
        st = images.load_png(out_dir / f"img{i}_stroke.png", channels=3)
        assert sk.shape == (SIZE, SIZE, 1)
        assert st.shape == (SIZE, SIZE, 3)
        assert set(np.unique(np.sign(sk))) <= {-1.0, 1.0}


def test_evaluate_writes_metrics_json(trained, tmp_path):
    ckpt = trained / "run" / "last.ckpt"
    out = tmp_path / "metrics.json"
    rc = main(["evaluate", "--ckpt", str(ckpt), "--real", str(trained),
               "--n", "2", "--seed", "0", "--out", str(out)])
    assert rc == 0
    body = json.loads(out.read_text())
    assert set(body) >= {"fid", "perceptual", "n_real", "n_fake", "embedder"}
    assert body["n_real"] == 3 and body["n_fake"] == 2
    assert np.isfinite(body["fid"]) and body["fid"] >= 0
    assert np.isfinite(body["perceptual"]) and body["perceptual"] >= 0


def test_unknown_command_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


def test_missing_checkpoint_is_reported(tmp_path, capsys):
    rc = main(["sample", "--ckpt", str(tmp_path / "none.ckpt"),
               "--out", str(tmp_path / "o.png")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
