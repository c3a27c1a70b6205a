"""Byte-level BPE shared by every model, plus sentence formatting.

Ids 0-4 are the control tokens, 5-260 the 256 raw bytes, and every merge
after that gets the next id in merge order. Words are pre-split on spaces;
a word after the first in a string carries its leading space, so decoding is
plain byte concatenation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import kernels
from .errors import ConfigurationError, PreconditionError

BOS, EOS, SEP, PAD, UNK = 0, 1, 2, 3, 4
CONTROL_TOKENS = ("<bos>", "<eos>", "<sep>", "<pad>", "<unk>")
N_CONTROL = len(CONTROL_TOKENS)
BYTE_OFFSET = N_CONTROL
ALPHABET_SIZE = 256
FIRST_MERGE_ID = BYTE_OFFSET + ALPHABET_SIZE
FORMAT_HEADER = "#meshqs-bpe v1"


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.mask):
            raise ValueError("ids and mask differ in length")

    def __len__(self):
        return len(self.ids)

    @classmethod
    def of(cls, ids: Sequence[int]) -> "TokenSequence":
        return cls(tuple(ids), (True,) * len(ids))


def _split_words(text: str) -> list[bytes]:
    parts = text.split(" ")
    out = []
    for k, p in enumerate(parts):
        if not p:
            continue
        out.append(((" " if out else "") + p).encode("utf-8"))
    return out


class Vocab:
    """Trained merge table. Immutable once built."""

    def __init__(self, merges: Sequence[tuple[int, int]]):
        self.merges: tuple[tuple[int, int], ...] = tuple((int(a), int(b)) for a, b in merges)
        self.token_bytes: list[bytes] = [b""] * N_CONTROL + [bytes([i]) for i in range(256)]
        self._ranks: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, (a, b) in enumerate(self.merges):
            if a < N_CONTROL or b < N_CONTROL:
                raise ValueError("merges may not involve control tokens")
            new_id = FIRST_MERGE_ID + rank
            if a >= new_id or b >= new_id:
                raise ValueError(f"merge {rank} refers to a later token")
            self.token_bytes.append(self.token_bytes[a] + self.token_bytes[b])
            self._ranks[(a, b)] = (rank, new_id)
        self._cache: dict[bytes, list[int]] = {}

    @property
    def size(self) -> int:
        return len(self.token_bytes)

    def token_to_id(self) -> dict[str, int]:
        table = {name: i for i, name in enumerate(CONTROL_TOKENS)}
        for i in range(N_CONTROL, self.size):
            table.setdefault(self.token_bytes[i].hex(), i)
        return table

    # -- encoding ---------------------------------------------------------

    def _encode_word(self, word: bytes) -> list[int]:
        ids = self._cache.get(word)
        if ids is None:
            ids = kernels.apply_merges([BYTE_OFFSET + b for b in word], self._ranks)
            if len(self._cache) < 100_000:
                self._cache[word] = ids
        return ids

    def encode_text(self, text: str) -> list[int]:
        out: list[int] = []
        for w in _split_words(text):
            out.extend(self._encode_word(w))
        return out

    def decode_ids(self, ids: Iterable[int]) -> str:
        """Concatenate non-control tokens; SEP becomes a visible marker."""
        chunks = []
        for i in ids:
            if i == SEP:
                chunks.append(b" <sep> ")
            elif i >= N_CONTROL and i < self.size:
                chunks.append(self.token_bytes[i])
        return b"".join(chunks).decode("utf-8", errors="replace")

    def decode_items(self, ids: Iterable[int]) -> list[str]:
        items: list[list[int]] = [[]]
        for i in ids:
            if i == SEP:
                items.append([])
            elif i >= N_CONTROL:
                items[-1].append(i)
        return [self.decode_ids(it).strip() for it in items]

    # -- serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = [FORMAT_HEADER, f"vocab_size {self.size}", f"merges {len(self.merges)}"]
        lines += [f"{a} {b}" for a, b in self.merges]
        lines.append(f"tokens {self.size}")
        for i in range(self.size):
            name = CONTROL_TOKENS[i] if i < N_CONTROL else self.token_bytes[i].hex()
            lines.append(f"{i}\t{name}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        lines = text.splitlines()
        if not lines or lines[0] != FORMAT_HEADER:
            raise ValueError("not a meshqs BPE vocabulary")
        n_merges = int(lines[2].split()[1])
        merges = [tuple(map(int, ln.split())) for ln in lines[3 : 3 + n_merges]]
        vocab = cls(merges)
        n_tokens = int(lines[3 + n_merges].split()[1])
        if n_tokens != vocab.size or int(lines[1].split()[1]) != vocab.size:
            raise ValueError("token table size disagrees with merges")
        for ln in lines[4 + n_merges : 4 + n_merges + n_tokens]:
            i, name = ln.split("\t")
            i = int(i)
            expect = CONTROL_TOKENS[i] if i < N_CONTROL else vocab.token_bytes[i].hex()
            if name != expect:
                raise ValueError(f"token table mismatch at id {i}")
        return vocab

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def train_bpe(corpus: Sequence[str], vocab_size: int) -> Vocab:
    """Greedy BPE: merge the most frequent adjacent pair until ``vocab_size``.

    Ties go to the lexicographically smallest (left bytes, right bytes).
    Training stops early once no pair is left to merge.
    """
    if vocab_size <= FIRST_MERGE_ID:
        raise PreconditionError(
            f"vocab_size must exceed {FIRST_MERGE_ID} (5 control + 256 byte tokens)"
        )
    word_freq: Counter = Counter()
    for text in corpus:
        word_freq.update(_split_words(text))
    if not word_freq:
        raise PreconditionError("cannot train BPE on an empty corpus")

    uniq = sorted(word_freq)
    words = [[BYTE_OFFSET + b for b in w] for w in uniq]
    freqs = [word_freq[w] for w in uniq]
    token_bytes = [b""] * N_CONTROL + [bytes([i]) for i in range(256)]
    merges: list[tuple[int, int]] = []

    while len(token_bytes) < vocab_size:
        counts = kernels.count_pairs(words, freqs)
        if not counts:
            break
        (a, b), _ = min(
            counts.items(), key=lambda kv: (-kv[1], token_bytes[kv[0][0]], token_bytes[kv[0][1]])
        )
        new_id = len(token_bytes)
        kernels.merge_pair(words, a, b, new_id)
        merges.append((a, b))
        token_bytes.append(token_bytes[a] + token_bytes[b])
    return Vocab(merges)


class Tokenizer:
    """Holds a vocabulary once trained or loaded."""

    def __init__(self, vocab: Vocab | None = None):
        self.vocab = vocab

    @property
    def trained(self) -> bool:
        return self.vocab is not None

    def _require(self) -> Vocab:
        if self.vocab is None:
            raise ConfigurationError("tokenizer has not been trained or loaded")
        return self.vocab

    @property
    def vocab_size(self) -> int:
        return self._require().size

    def train(self, corpus: Sequence[str], vocab_size: int) -> "Tokenizer":
        self.vocab = train_bpe(corpus, vocab_size)
        return self

    def encode_items(self, texts: Sequence[str]) -> TokenSequence:
        """``BOS item1 SEP item2 ... EOS``; no separator for a single item."""
        vocab = self._require()
        ids = [BOS]
        for k, t in enumerate(texts):
            if k:
                ids.append(SEP)
            ids.extend(vocab.encode_text(t))
        ids.append(EOS)
        return TokenSequence.of(ids)

    def encode_hypothesis(self, h) -> TokenSequence:
        return self.encode_items(h.texts)

    def encode_target(self, text: str) -> TokenSequence:
        return self.encode_items([text])

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self._require().decode_ids(ids).split())

    def decode_items(self, ids: Iterable[int]) -> list[str]:
        return self._require().decode_items(ids)

    def save(self, path: str | Path) -> None:
        self._require().save(path)

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        return cls(Vocab.load(path))


def encode_hypothesis(h, vocab: Vocab) -> TokenSequence:
    return Tokenizer(vocab).encode_hypothesis(h)


def pad_batch(seqs: Sequence[TokenSequence], target_len: int) -> list[TokenSequence]:
    """Right-pad every sequence to ``target_len`` with PAD (mask False)."""
    longest = max((len(s) for s in seqs), default=0)
    if target_len < longest:
        raise PreconditionError(f"target_len {target_len} < longest sequence {longest}")
    out = []
    for s in seqs:
        extra = target_len - len(s)
        out.append(TokenSequence(s.ids + (PAD,) * extra, s.mask + (False,) * extra))
    return out
