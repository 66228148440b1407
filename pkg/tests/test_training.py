import json
from pathlib import Path

import numpy as np
import pytest

from klat.config import TrainConfig
from klat.errors import ConfigurationError
from klat.metrics import MetricsReport
from klat.model import VARIANT_TOUCHED_PREFIXES
from klat.training import (
    ABLATION_ORDER,
    RunRecord,
    ablate,
    ablation_table,
    dump_predictions,
    evaluate,
    inventory_diff,
    sweep,
    sweep_table,
    train,
)


def quiet(*args, **kwargs):
    pass


def test_config_roundtrip_byte_identical():
    cfg = TrainConfig(seed=99, hidden=64)
    text = cfg.to_yaml()
    assert TrainConfig.from_yaml(text).to_yaml() == text


def test_config_rejects_bad_betas():
    with pytest.raises(ConfigurationError):
        TrainConfig(beta_doc=0.7, beta_know=0.7)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        TrainConfig.from_yaml("no_such_key: 1\n")


def test_config_defaults_match_training_protocol():
    cfg = TrainConfig()
    assert cfg.max_len == 250
    assert cfg.label_dim == 300
    assert cfg.hidden == 300
    assert cfg.batch_size == 128
    assert cfg.learning_rate == 1e-4
    assert (cfg.adam_beta1, cfg.adam_beta2) == (0.9, 0.999)
    assert cfg.max_epochs == 200
    assert cfg.early_stop_patience == 10


def test_train_is_deterministic(toy_config):
    cfg = toy_config.replace(max_epochs=4, early_stop_patience=10)
    rec1 = train(cfg, log=quiet)
    rec2 = train(cfg.replace(checkpoint_dir=cfg.checkpoint_dir + "_b"), log=quiet)
    assert rec1.train_losses == rec2.train_losses
    assert rec1.valid_losses == rec2.valid_losses
    assert rec1.checkpoint_hash == rec2.checkpoint_hash


def test_early_stopping_on_plateau(toy_config):
    # zero learning rate: validation loss plateaus from epoch 1
    cfg = toy_config.replace(learning_rate=0.0, max_epochs=50, early_stop_patience=10)
    rec = train(cfg, log=quiet)
    assert rec.stopped_epoch == 11  # best at 1, then 10 non-improving epochs


def test_metrics_recomputable_from_checkpoint(toy_config):
    cfg = toy_config.replace(max_epochs=3)
    rec = train(cfg, log=quiet)
    report = evaluate(cfg.checkpoint_dir, "valid")
    for key in ("hamming_loss", "micro_precision", "micro_recall", "micro_f1"):
        assert abs(getattr(report, key) - rec.metrics[key]) < 1e-6


def test_evaluate_twice_identical(toy_config):
    cfg = toy_config.replace(max_epochs=2)
    train(cfg, log=quiet)
    assert evaluate(cfg.checkpoint_dir, "test") == evaluate(cfg.checkpoint_dir, "test")


def test_run_record_persisted(toy_config):
    cfg = toy_config.replace(max_epochs=2)
    rec = train(cfg, log=quiet)
    loaded = RunRecord.load(Path(cfg.checkpoint_dir) / "run_record.json")
    assert loaded.to_json() == rec.to_json()
    assert loaded.seeds["master"] == cfg.seed


def test_dump_predictions_format(toy_config, tmp_path):
    cfg = toy_config.replace(max_epochs=2)
    train(cfg, log=quiet)
    out = tmp_path / "preds.tsv"
    dump_predictions(cfg.checkpoint_dir, "test", out, top_k=3)
    lines = out.read_text().splitlines()
    assert len(lines) == 8
    first = lines[0].split("\t")
    assert len(first) == 4  # doc id + 3 label:prob cells
    label, prob = first[1].rsplit(":", 1)
    assert 0.0 <= float(prob) <= 1.0


def test_ablation_variants_and_inventory(toy_config):
    cfg = toy_config.replace(max_epochs=1)
    full = train(cfg, log=quiet)
    full_manifest = json.loads((Path(cfg.checkpoint_dir) / "manifest_init.json").read_text())
    records = {"full": full}
    for variant in ABLATION_ORDER:
        rec = ablate(cfg, variant, log=quiet)
        records[variant] = rec
        manifest = json.loads((Path(rec.checkpoint_dir) / "manifest_init.json").read_text())
        touched = inventory_diff(full_manifest, manifest)
        allowed = VARIANT_TOUCHED_PREFIXES[variant]
        assert touched, variant
        bad = {n for n in touched if not n.startswith(allowed)}
        assert not bad, f"{variant} unexpectedly touched {bad}"
    table = ablation_table(records)
    rows = table.splitlines()
    assert rows[1].startswith("no_KR") and rows[-1].startswith("full")


def test_ablate_unknown_variant(toy_config):
    with pytest.raises(ValueError):
        ablate(toy_config, "no_ZZ", log=quiet)


def test_sweep_single_value(toy_config):
    cfg = toy_config.replace(max_epochs=1)
    records = sweep(cfg, "length", [20], log=quiet)
    assert len(records) == 1
    tests = [evaluate(records[0].checkpoint_dir, "test")]
    table = sweep_table("length", [20], records, tests)
    assert table.splitlines()[0].startswith("length\t")
    assert len(table.splitlines()) == 2


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep(TrainConfig(), "width", [1], log=quiet)
    with pytest.raises(ValueError):
        sweep(TrainConfig(), "length", [], log=quiet)


def test_evaluate_vocab_mismatch(toy_config, tmp_path):
    cfg = toy_config.replace(max_epochs=1)
    train(cfg, log=quiet)
    # swap the dataset's label manifest out from under the checkpoint
    labels_path = Path(cfg.data_dir) / "labels.txt"
    labels_path.write_text("economy\nscience\nsports\nother\n")
    with pytest.raises(Exception):
        evaluate(cfg.checkpoint_dir, "test")
