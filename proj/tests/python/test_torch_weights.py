"""Round trip: torchvision resnet18 state dict -> trunk weight file -> C++ model.

Runs only when torch/torchvision are importable; uses a randomly initialized
(seeded) network so no download is needed.
"""

import pathlib
import subprocess
import sys

import numpy as np
import pytest

pytest.importorskip("torch")
pytest.importorskip("torchvision")

import dynaseg

REPO = pathlib.Path(__file__).resolve().parents[2]
EXPORTER = REPO / "scripts" / "export_resnet18_weights.py"


@pytest.fixture(scope="module")
def trunk_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("weights") / "trunk.dswt"
    subprocess.run([sys.executable, str(EXPORTER), str(out), "--seed", "1"], check=True)
    return out


def narrow_fpn_config(weights_path):
    cfg = dynaseg.RunConfig()
    cfg.backbone = dynaseg.BackboneKind.RESNET_FPN
    cfg.fpn_width = 8
    cfg.q = 4
    cfg.weights_path = str(weights_path)
    cfg.allow_random_init = False
    return cfg


def test_exported_trunk_loads(trunk_file):
    # allow_random_init=False makes a load failure fatal, so a successful
    # build proves every trunk tensor was found and shaped correctly.
    count = dynaseg.param_count(narrow_fpn_config(trunk_file))
    assert count > 11_000_000  # the 18-layer trunk dominates the narrow decoder


def test_missing_or_corrupt_weights_raise(tmp_path):
    with pytest.raises(RuntimeError):
        dynaseg.param_count(narrow_fpn_config(tmp_path / "absent.dswt"))

    bad = tmp_path / "bad.dswt"
    bad.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(RuntimeError):
        dynaseg.param_count(narrow_fpn_config(bad))


def test_segment_runs_on_the_loaded_trunk(trunk_file):
    corpus = dynaseg.synthetic_corpus(count=1, blocks=3, height=32, width=32,
                                      noise=0.02, seed=3)
    cfg = narrow_fpn_config(trunk_file)
    cfg.max_iters = 1
    cfg.stop_mode = dynaseg.StopMode.FIXED_K
    cfg.fixed_threshold = 1
    cfg.silhouette.enabled = False
    cfg.lr = 0.01
    cfg.seed = 8

    first = dynaseg.segment(corpus[0][0], cfg)
    assert first["labels"].shape == (32, 32)
    assert first["iters"] == 1
    assert all(np.isfinite(v) for v in first["loss_history"])

    second = dynaseg.segment(corpus[0][0], cfg)
    assert np.array_equal(first["labels"], second["labels"])
