import json
import math

import pytest
import torch

from meshqs.errors import PreconditionError, TrainingDivergedError
from meshqs.ingest import CorpusSplit
from meshqs.model import ModelConfig
from meshqs.trainer import TrainConfig, build_model, epoch_order, lr_at, train

from conftest import make_session

TRAIN = [
    make_session([("data engineer", []), ("nurse", ["registered nurse"])], "registered nurse", f"t{i}")
    for i in range(6)
] + [make_session([("chef", ["head chef perth"])], "head chef perth", f"c{i}") for i in range(6)]


def cfg_for(tok, **kw):
    return ModelConfig(tok.vocab_size, d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=32, dropout_rate=0.1, **kw)


def test_lr_warmup():
    cfg = TrainConfig(lr=1e-3, warmup_steps=10)
    assert lr_at(1, cfg) == pytest.approx(1e-4)
    assert lr_at(10, cfg) == pytest.approx(1e-3)
    assert lr_at(500, cfg) == 1e-3
    assert lr_at(3, TrainConfig(lr=1e-3, warmup_steps=0)) == 1e-3


def test_epoch_order_is_seeded_permutation():
    a = epoch_order(1, 0, 10)
    assert sorted(a.tolist()) == list(range(10))
    assert (a == epoch_order(1, 0, 10)).all() and not (a == epoch_order(1, 1, 10)).all()


def test_loss_decreases_and_logs(small_tokenizer, tmp_path):
    model = build_model(cfg_for(small_tokenizer), seed=0)
    cfg = TrainConfig(batch_size=4, lr=3e-3, warmup_steps=5, max_steps=60, max_epochs=100)
    state = train(cfg, CorpusSplit(train=TRAIN), model, small_tokenizer, out_dir=tmp_path)
    losses = [e["loss"] for e in state.log]
    assert len(losses) == 60 and losses[-1] < losses[0] * 0.7
    lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["step"] == 60
    assert (tmp_path / "best.pt").exists() and (tmp_path / "last.pt").exists()


def test_resume_matches_uninterrupted(small_tokenizer, tmp_path):
    base = dict(batch_size=4, lr=3e-3, warmup_steps=5, max_epochs=100)
    full = build_model(cfg_for(small_tokenizer), seed=0)
    ref = train(TrainConfig(max_steps=20, **base), CorpusSplit(train=TRAIN), full, small_tokenizer)

    part = build_model(cfg_for(small_tokenizer), seed=0)
    train(TrainConfig(max_steps=8, **base), CorpusSplit(train=TRAIN), part, small_tokenizer, out_dir=tmp_path / "a")
    resumed = build_model(cfg_for(small_tokenizer), seed=5)
    state = train(
        TrainConfig(max_steps=20, **base), CorpusSplit(train=TRAIN), resumed, small_tokenizer,
        resume_from=tmp_path / "a" / "last.pt",
    )
    assert [e["loss"] for e in state.log] == [e["loss"] for e in ref.log]
    for a, b in zip(full.state_dict().values(), resumed.state_dict().values()):
        assert torch.equal(a, b)


def test_early_stopping_restores_best(small_tokenizer):
    model = build_model(cfg_for(small_tokenizer), seed=0)
    cfg = TrainConfig(batch_size=4, lr=3e-3, warmup_steps=1, max_steps=400, max_epochs=1000,
                      eval_interval=5, patience_steps=10, beam_width=2, eval_k=1, max_decode_len=8)
    state = train(cfg, CorpusSplit(train=TRAIN, dev=TRAIN[:2]), model, small_tokenizer)
    evals = [e for e in state.log if e["dev_wer"] is not None]
    assert state.stopped_early and state.step < 400
    assert state.best_dev_wer == min(e["dev_wer"] for e in evals)
    assert state.step - state.best_step >= 10


def test_divergence_raises(small_tokenizer):
    model = build_model(cfg_for(small_tokenizer), seed=0)
    with torch.no_grad():
        model.embed.weight[5:] = math.nan
    with pytest.raises(TrainingDivergedError, match="step 1"):
        train(TrainConfig(max_steps=2), CorpusSplit(train=TRAIN), model, small_tokenizer)


def test_empty_train(small_tokenizer):
    with pytest.raises(PreconditionError):
        train(TrainConfig(), CorpusSplit(), build_model(cfg_for(small_tokenizer), 0), small_tokenizer)
