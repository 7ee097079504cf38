"""Session fixtures: one small trained model shared by service/CLI tests."""

import numpy as np
import pytest

from axinspect.ingest import balance_downsample, split_by_board
from axinspect.metrics import build_report, select_threshold
from axinspect.models import load_checkpoint, save_checkpoint
from axinspect.preprocess import load_store_patches, preprocess_dataset
from axinspect.synth import SynthConfig, generate_synthetic
from axinspect.training import TrainConfig, _prepare, score_inputs, train_on_patches


@pytest.fixture(scope="session")
def desk_model(tmp_path_factory):
    """Synthetic dataset + trained shrunken cnn3d + validation-picked threshold."""
    root = tmp_path_factory.mktemp("desk")
    synth_cfg = SynthConfig(seed=101, joints=260, defect_fraction=0.25, roi_noise=0.15,
                            image_bound=96, board_types=6)
    manifest = generate_synthetic(synth_cfg, root / "data")
    store = root / "store"
    preprocess_dataset(manifest, store)
    train_m, val_m, test_m = split_by_board(manifest, (0.6, 0.2, 0.2), seed=0)
    train_b = balance_downsample(train_m, seed=0)

    config = TrainConfig(arch="cnn3d", variant="shrunken", learning_rate=1e-3,
                         batch_size=16, epochs=14, seed=5)
    params, spec, _ = train_on_patches(
        load_store_patches(train_b, store), load_store_patches(val_m, store), config
    )

    val_patches = load_store_patches(val_m, store)
    vi, vl = _prepare(spec, val_patches)
    val_report = build_report(score_inputs(params, spec, vi), vl)
    threshold = select_threshold(val_report, 0.90)

    ck_path = root / "model.ck"
    save_checkpoint(ck_path, spec, params, meta={"fixture": "desk_model"})

    test_patches = load_store_patches(test_m, store)
    ti, tl = _prepare(spec, test_patches)
    test_scores = score_inputs(params, spec, ti)

    return {
        "root": root,
        "synth_cfg": synth_cfg,
        "manifest": manifest,
        "store": store,
        "splits": (train_b, val_m, test_m),
        "checkpoint": ck_path,
        "spec": spec,
        "params": params,
        "threshold": float(threshold),
        "val_report": val_report,
        "test_scores": test_scores,
        "test_labels": tl,
        "test_manifest": test_m,
    }
