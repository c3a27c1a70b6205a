"""Training loop: Adam with linear warmup, early stopping on dev WER@k."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .decoder import suggest
from .errors import PreconditionError, TrainingDivergedError
from .metrics import wer_at_k
from .model import ModelConfig, QuerySuggester, collate, save_checkpoint
from .tokenizer import Tokenizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 16
    lr: float = 3e-4
    warmup_steps: int = 100
    max_epochs: int = 3
    max_steps: int | None = None
    eval_interval: int = 500
    patience_steps: int = 10_000
    eval_k: int = 3
    beam_width: int = 8
    max_decode_len: int = 32
    dev_limit: int | None = None
    grad_clip: float | None = 1.0
    float64: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""

    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    best_dev_wer: float = math.inf
    best_step: int = 0
    best_state: dict | None = None
    stopped_early: bool = False
    log: list[dict] = field(default_factory=list)


def build_model(config: ModelConfig, seed: int, float64: bool = False) -> QuerySuggester:
    torch.manual_seed(seed)
    model = QuerySuggester(config)
    return model.double() if float64 else model


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup over ``warmup_steps`` then constant."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    return cfg.lr


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def dev_wer(model, tokenizer, sessions, cfg: TrainConfig) -> float:
    if not sessions:
        return math.nan
    lists = suggest(model, tokenizer, sessions, k=cfg.eval_k, width=max(cfg.beam_width, cfg.eval_k), max_len=cfg.max_decode_len)
    return float(np.mean([wer_at_k(s.ground_truth, sl.texts, cfg.eval_k) for s, sl in zip(sessions, lists)]))


def _save_resume(path: Path, model, tokenizer, optimizer, state: TrainState, cfg: TrainConfig):
    extra = {
        "train_config": asdict(cfg),
        "optimizer": optimizer.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "state": {k: v for k, v in asdict(state).items() if k not in ("best_state", "log")},
        "best_state": state.best_state,
        "log": state.log,
    }
    save_checkpoint(path, model, tokenizer.vocab, extra)


def train(
    cfg: TrainConfig,
    corpus,
    model: QuerySuggester,
    tokenizer: Tokenizer,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    on_record: Callable[[dict], None] | None = None,
) -> TrainState:
    """Train ``model`` in place on ``corpus.train``; best dev weights are loaded at the end.

    Every ``eval_interval`` steps dev WER@``eval_k`` is measured with beam
    search; the run stops once ``patience_steps`` pass without improvement.
    With ``out_dir`` set, writes ``best.pt``, ``last.pt`` (resumable) and
    ``train_log.jsonl``.
    """
    train_set = list(corpus.train)
    if not train_set:
        raise PreconditionError("training split is empty")
    dev_set = list(corpus.dev)
    if cfg.dev_limit is not None:
        dev_set = dev_set[: cfg.dev_limit]

    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    state = TrainState()
    if resume_from is not None:
        payload = torch.load(resume_from, map_location="cpu", weights_only=False)
        extra = payload["extra"]
        model.load_state_dict(payload["state_dict"])
        optimizer.load_state_dict(extra["optimizer"])
        torch.set_rng_state(extra["torch_rng"])
        state = TrainState(**extra["state"], best_state=extra["best_state"], log=list(extra["log"]))
    else:
        torch.manual_seed(cfg.seed + 1)

    cache: dict = {}
    n_batches = math.ceil(len(train_set) / cfg.batch_size)
    max_steps = cfg.max_steps if cfg.max_steps is not None else cfg.max_epochs * n_batches

    def record(entry):
        state.log.append(entry)
        if on_record:
            on_record(entry)

    model.train()
    while state.epoch < cfg.max_epochs and state.step < max_steps and not state.stopped_early:
        order = epoch_order(cfg.seed, state.epoch, len(train_set))
        while state.batch_in_epoch < n_batches and state.step < max_steps:
            b = state.batch_in_epoch
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = collate([train_set[i] for i in idx], tokenizer, model.config, cache=cache)
            state.step += 1
            state.batch_in_epoch += 1
            for group in optimizer.param_groups:
                group["lr"] = lr_at(state.step, cfg)
            loss = model.loss(batch)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss.item()} at step {state.step} (epoch {state.epoch}, lr {lr_at(state.step, cfg):.2e})"
                )
            optimizer.zero_grad()
            loss.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            entry = {"step": state.step, "epoch": state.epoch, "loss": float(loss.item()), "dev_wer": None}

            if dev_set and cfg.eval_interval > 0 and state.step % cfg.eval_interval == 0:
                model.eval()
                rng_state = torch.get_rng_state()
                wer = dev_wer(model, tokenizer, dev_set, cfg)
                torch.set_rng_state(rng_state)
                model.train()
                entry["dev_wer"] = wer
                if wer < state.best_dev_wer:
                    state.best_dev_wer = wer
                    state.best_step = state.step
                    state.best_state = copy.deepcopy(model.state_dict())
                    if out_dir is not None:
                        save_checkpoint(Path(out_dir) / "best.pt", model, tokenizer.vocab, {"step": state.step, "dev_wer": wer})
                elif state.step - state.best_step >= cfg.patience_steps:
                    state.stopped_early = True
                    record(entry)
                    break
            record(entry)
        else:
            if state.batch_in_epoch >= n_batches:
                state.epoch += 1
                state.batch_in_epoch = 0

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _save_resume(out / "last.pt", model, tokenizer, optimizer, state, cfg)
        with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in state.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    if state.best_state is not None:
        model.load_state_dict(state.best_state)
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / "best.pt", model, tokenizer.vocab, {"step": state.best_step, "dev_wer": state.best_dev_wer})
    model.eval()
    log.info("training stopped at step %d (best dev WER %.4f at step %d)", state.step, state.best_dev_wer, state.best_step)
    return state
