"""Encoder-decoder transformer with vanilla and meshed input modes.

Vanilla mode encodes one token sequence. Mesh mode encodes the four
hypotheses with the same encoder, scores every encoder state with a single
learned vector, softmaxes those scores across hypotheses at each position
(only over hypotheses that have a real token there) and feeds the weighted
sum to the decoder. The decoder's cross-attention mask is the union of the
four input masks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import PreconditionError
from .hypotheses import MESH_KINDS, HypothesisKind, build_hypothesis
from .tokenizer import BOS, PAD, Tokenizer, Vocab

CHECKPOINT_FORMAT = "meshqs-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    max_positions: int = 128
    dropout_rate: float = 0.1
    mode: str = "mesh"
    # input view for vanilla mode: K1..K4 or CONTEXT (full interleaved session)
    vanilla_input: str = "CONTEXT"
    positions: str = "learned"
    attn_bias: bool = False
    init_std: float = 0.02

    def __post_init__(self):
        if self.mode not in ("vanilla", "mesh"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.positions not in ("learned", "sinusoidal"):
            raise ValueError(f"unknown positions {self.positions!r}")
        HypothesisKind(self.vanilla_input)
        for name in ("vocab_size", "d_model", "n_heads", "n_enc_layers", "n_dec_layers", "d_ff", "max_positions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    """Model-ready tensors for a list of sessions.

    ``enc_ids``/``enc_mask`` are ``[B, T]`` in vanilla mode and ``[B, 4, T]``
    in mesh mode; ``dec_in``/``labels`` are ``[B, L]`` with PAD-free labels
    replaced by -100 where the target is padding.
    """

    enc_ids: torch.Tensor
    enc_mask: torch.Tensor
    dec_in: torch.Tensor | None = None
    labels: torch.Tensor | None = None
    session_ids: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.enc_ids.shape[0]

    def target_tokens(self) -> int:
        return int((self.labels != -100).sum()) if self.labels is not None else 0


def _pad_ids(rows: Sequence[Sequence[int]], length: int) -> tuple[torch.Tensor, torch.Tensor]:
    ids = torch.full((len(rows), length), PAD, dtype=torch.long)
    mask = torch.zeros((len(rows), length), dtype=torch.bool)
    for r, seq in enumerate(rows):
        ids[r, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[r, : len(seq)] = True
    return ids, mask


def input_views(session, mode: str, vanilla_input: str = "CONTEXT") -> list:
    if mode == "mesh":
        return [build_hypothesis(session, k) for k in MESH_KINDS]
    return [build_hypothesis(session, vanilla_input)]


def encode_inputs(session, tokenizer: Tokenizer, config: ModelConfig) -> list[list[int]]:
    return [
        list(tokenizer.encode_hypothesis(h).ids)
        for h in input_views(session, config.mode, config.vanilla_input)
    ]


def collate(
    sessions, tokenizer: Tokenizer, config: ModelConfig, with_targets: bool = True, cache: dict | None = None
) -> Batch:
    """Tensorize sessions; ``cache`` (session_id -> ids) skips re-encoding."""
    if not sessions:
        raise PreconditionError("empty batch")
    encoded = []
    for s in sessions:
        ids = cache.get(s.session_id) if cache is not None else None
        if ids is None:
            ids = encode_inputs(s, tokenizer, config)
            if cache is not None:
                cache[s.session_id] = ids
        encoded.append(ids)
    T = max(len(seq) for views in encoded for seq in views)
    if config.mode == "mesh":
        flat = [seq for views in encoded for seq in views]
        ids, mask = _pad_ids(flat, T)
        ids = ids.view(len(sessions), len(MESH_KINDS), T)
        mask = mask.view(len(sessions), len(MESH_KINDS), T)
    else:
        ids, mask = _pad_ids([views[0] for views in encoded], T)
    batch = Batch(ids, mask, session_ids=tuple(s.session_id for s in sessions))
    if with_targets:
        targets = [list(tokenizer.encode_target(s.ground_truth).ids) for s in sessions]
        L = max(len(t) for t in targets) - 1
        dec_in, dmask = _pad_ids([t[:-1] for t in targets], L)
        labels, _ = _pad_ids([t[1:] for t in targets], L)
        labels[~dmask] = -100
        batch.dec_in, batch.labels = dec_in, labels
    return batch


# ---------------------------------------------------------------------------
# layers


def _masked_fill_min(x: torch.Tensor, invalid: torch.Tensor) -> torch.Tensor:
    # finfo.min instead of -inf: exp underflows to exactly 0 for excluded
    # entries and fully-masked rows stay finite (no NaN in backward)
    return x.masked_fill(invalid, torch.finfo(x.dtype).min)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x, kv, key_mask=None, causal=False):
        B, Tq, D = x.shape
        Tk = kv.shape[1]
        q = self.q_proj(x).view(B, Tq, self.n_heads, self.d_head).transpose(1, 2)
        k = self.k_proj(kv).view(B, Tk, self.n_heads, self.d_head).transpose(1, 2)
        v = self.v_proj(kv).view(B, Tk, self.n_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        invalid = torch.zeros((B, 1, Tq, Tk), dtype=torch.bool, device=x.device)
        if key_mask is not None:
            invalid = invalid | ~key_mask[:, None, None, :]
        if causal:
            future = torch.ones((Tq, Tk), dtype=torch.bool, device=x.device).triu(1)
            invalid = invalid | future
        scores = _masked_fill_min(scores, invalid)
        weights = scores.softmax(dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(B, Tq, D)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_ff)
        self.fc2 = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.dropout(F.gelu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, mask):
        h = self.ln1(x)
        x = x + self.dropout(self.attn(h, h, key_mask=mask))
        return x + self.dropout(self.ff(self.ln2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, y, memory, memory_mask):
        h = self.ln1(y)
        y = y + self.dropout(self.self_attn(h, h, causal=True))
        y = y + self.dropout(self.cross_attn(self.ln2(y), memory, key_mask=memory_mask))
        return y + self.dropout(self.ff(self.ln3(y)))


def sinusoidal_table(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    table = torch.zeros(n, d, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return table.float()


class Positions(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.positions == "learned":
            self.table = nn.Embedding(cfg.max_positions, cfg.d_model)
        else:
            self.table = None
            self.register_buffer("fixed", sinusoidal_table(cfg.max_positions, cfg.d_model), persistent=False)

    def forward(self, length: int) -> torch.Tensor:
        if self.table is not None:
            return self.table.weight[:length]
        return self.fixed[:length]


@dataclass
class MeshedSequence:
    """Decoder memory: fused states ``[B, T, d]``, union mask ``[B, T]`` and,
    in mesh mode, the fusion weights ``[B, 4, T]`` (zero where invalid)."""

    fused: torch.Tensor
    union_mask: torch.Tensor
    attn_weights: torch.Tensor | None = None

    def select(self, index) -> "MeshedSequence":
        w = self.attn_weights[index] if self.attn_weights is not None else None
        return MeshedSequence(self.fused[index], self.union_mask[index], w)


def mesh_fuse(states: torch.Tensor, masks: torch.Tensor, w_attn: nn.Linear) -> MeshedSequence:
    """Tokenwise fusion of per-hypothesis encoder states.

    ``states`` is ``[B, H, T, d]`` and ``masks`` ``[B, H, T]``. At every
    position the logits ``w_attn(S)`` are softmaxed over the hypotheses that
    are valid there; positions valid for none get weight 0 and a zero vector.
    """
    if states.dim() != 4 or masks.shape != states.shape[:3]:
        raise PreconditionError(
            f"encodings must share one length: states {tuple(states.shape)}, masks {tuple(masks.shape)}"
        )
    states = states * masks.unsqueeze(-1).to(states.dtype)
    logits = w_attn(states).squeeze(-1)
    logits = _masked_fill_min(logits, ~masks)
    alpha = logits.softmax(dim=1) * masks.to(states.dtype)
    union = masks.any(dim=1)
    fused = (alpha.unsqueeze(-1) * states).sum(dim=1)
    return MeshedSequence(fused, union, alpha)


class QuerySuggester(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        d = cfg.d_model
        self.embed = nn.Embedding(cfg.vocab_size, d)
        self.enc_pos = Positions(cfg)
        self.dec_pos = Positions(cfg)
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_enc_layers))
        self.enc_ln = nn.LayerNorm(d)
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_dec_layers))
        self.dec_ln = nn.LayerNorm(d)
        self.dropout = nn.Dropout(cfg.dropout_rate)
        self.w_attn = nn.Linear(d, 1, bias=cfg.attn_bias) if cfg.mode == "mesh" else None
        self.reset_parameters()

    def reset_parameters(self):
        std = self.config.init_std
        for m in self.modules():
            if isinstance(m, (nn.Linear, nn.Embedding)):
                nn.init.normal_(m.weight, 0.0, std)
                if getattr(m, "bias", None) is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.LayerNorm):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    @property
    def mode(self) -> str:
        return self.config.mode

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    # -- encoder ----------------------------------------------------------

    def encode(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``[N, T]`` ids -> ``[N, T, d]`` states, zero at masked positions."""
        T = ids.shape[-1]
        if T > self.config.max_positions:
            raise PreconditionError(f"input length {T} exceeds max_positions {self.config.max_positions}")
        x = self.dropout(self.embed(ids) + self.enc_pos(T))
        for layer in self.enc_layers:
            x = layer(x, mask)
        x = self.enc_ln(x)
        return x * mask.unsqueeze(-1).to(x.dtype)

    def memory(self, enc_ids: torch.Tensor, enc_mask: torch.Tensor) -> MeshedSequence:
        if self.mode == "vanilla":
            if enc_ids.dim() != 2:
                raise PreconditionError("vanilla mode expects [B, T] input")
            return MeshedSequence(self.encode(enc_ids, enc_mask), enc_mask)
        if enc_ids.dim() != 3:
            raise PreconditionError("mesh mode expects [B, H, T] input")
        B, H, T = enc_ids.shape
        states = self.encode(enc_ids.reshape(B * H, T), enc_mask.reshape(B * H, T))
        return mesh_fuse(states.view(B, H, T, -1), enc_mask, self.w_attn)

    # -- decoder ----------------------------------------------------------

    def decode(self, memory: MeshedSequence, dec_in: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits ``[B, L, V]`` for decoder input ``dec_in``."""
        L = dec_in.shape[1]
        if L > self.config.max_positions:
            raise PreconditionError(f"decoder prefix {L} exceeds max_positions {self.config.max_positions}")
        y = self.dropout(self.embed(dec_in) + self.dec_pos(L))
        for layer in self.dec_layers:
            y = layer(y, memory.fused, memory.union_mask)
        return self.dec_ln(y) @ self.embed.weight.T

    def decode_step(self, memory: MeshedSequence, prefix: torch.Tensor) -> torch.Tensor:
        """Next-token logits ``[B, V]`` for prefixes ``[B, L]`` starting with BOS."""
        if not bool((prefix[:, 0] == BOS).all()):
            raise PreconditionError("decoder prefix must start with BOS")
        return self.decode(memory, prefix)[:, -1]

    def forward(self, batch: Batch) -> torch.Tensor:
        return self.decode(self.memory(batch.enc_ids, batch.enc_mask), batch.dec_in)

    def loss(self, batch: Batch) -> torch.Tensor:
        """Mean token-level cross entropy over non-PAD target positions."""
        if batch.size == 0 or batch.labels is None:
            raise PreconditionError("loss needs a non-empty batch with targets")
        logits = self(batch)
        return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), batch.labels.reshape(-1), ignore_index=-100)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, model: QuerySuggester, vocab: Vocab, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": vocab.dumps(),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[QuerySuggester, Tokenizer, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a meshqs checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    model = QuerySuggester(ModelConfig.from_dict(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    if any(p.dtype == torch.float64 for p in payload["state_dict"].values()):
        model.double()
    model.eval()
    return model, Tokenizer(Vocab.loads(payload["vocab"])), payload.get("extra", {})


def export_attention(meshed: MeshedSequence, session_ids: Sequence[str], path: str | Path) -> None:
    """One block per session: header line, then four rows of T weights."""
    if meshed.attn_weights is None:
        raise PreconditionError("attention weights exist only in mesh mode")
    with open(path, "w", encoding="utf-8") as fh:
        for b, sid in enumerate(session_ids):
            valid = meshed.union_mask[b]
            T = int(valid.sum())
            fh.write(f"# {sid}\t{T}\n")
            for i, kind in enumerate(MESH_KINDS):
                row = meshed.attn_weights[b, i, :T].tolist()
                fh.write(kind.value + "\t" + "\t".join(f"{v:.6f}" for v in row) + "\n")
