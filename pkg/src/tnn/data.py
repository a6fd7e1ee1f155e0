"""Corpus handling: byte/char tokenization, deterministic train/validation
split, window sampling, the unigram counting baseline, and a seeded
synthetic corpus generator so the training pipeline needs no downloads.

The split is contiguous: the last val_fraction of the token stream is
validation, the rest is training. Documented so numbers are reproducible.
"""

from dataclasses import dataclass

import numpy as np

from tnn.errors import ConfigError, DimensionError

VOCAB_MODES = ("byte", "char")
DEFAULT_VAL_FRACTION = 0.1


@dataclass
class Corpus:
    tokens: np.ndarray  # int64 token stream
    vocab_size: int
    vocab_mode: str
    charset: str  # char mode: index -> character; byte mode: ""
    val_fraction: float

    @property
    def train(self) -> np.ndarray:
        return self.tokens[: self._split_point()]

    @property
    def val(self) -> np.ndarray:
        return self.tokens[self._split_point() :]

    def _split_point(self) -> int:
        return len(self.tokens) - int(len(self.tokens) * self.val_fraction)

    def stats(self) -> dict:
        seen = np.unique(self.tokens)
        return {
            "tokens": int(len(self.tokens)),
            "train_tokens": int(len(self.train)),
            "val_tokens": int(len(self.val)),
            "vocab_size": self.vocab_size,
            "distinct_tokens": int(seen.size),
            "vocab_mode": self.vocab_mode,
        }


def tokenize_bytes(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def detokenize(tokens: np.ndarray, vocab_mode: str, charset: str = "") -> bytes:
    """Inverse of ingestion; byte mode round-trips any input exactly."""
    if vocab_mode == "byte":
        return np.asarray(tokens, dtype=np.uint8).tobytes()
    return "".join(charset[t] for t in np.asarray(tokens)).encode("utf-8")


def ingest_corpus(
    path: str, vocab_mode: str = "byte", val_fraction: float = DEFAULT_VAL_FRACTION
) -> Corpus:
    """Read a text file into a token stream with a deterministic tail split.

    byte mode: one token per byte, vocab 256. char mode: one token per
    distinct character (sorted charset defines the mapping), vocab = charset
    size; undecodable input is an error.
    """
    if vocab_mode not in VOCAB_MODES:
        raise ConfigError(f"vocab_mode must be one of {VOCAB_MODES}")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError("val_fraction must lie strictly between 0 and 1")
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        raise ConfigError(f"corpus file {path!r} is empty")
    if vocab_mode == "byte":
        tokens = tokenize_bytes(raw)
        return Corpus(tokens, 256, "byte", "", val_fraction)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"char mode needs UTF-8 decodable input: {exc}") from exc
    charset = "".join(sorted(set(text)))
    lookup = {ch: i for i, ch in enumerate(charset)}
    tokens = np.fromiter((lookup[ch] for ch in text), dtype=np.int64, count=len(text))
    return Corpus(tokens, len(charset), "char", charset, val_fraction)


def unigram_baseline(train_tokens: np.ndarray, val_tokens: np.ndarray, vocab_size: int) -> float:
    """Counting-oracle baseline: cross-entropy (nats) of the validation
    stream under the add-one-smoothed unigram distribution of the training
    stream. A sequence model must beat this to demonstrate any learning."""
    counts = np.bincount(np.asarray(train_tokens, dtype=np.int64), minlength=vocab_size)
    probs = (counts + 1.0) / (counts.sum() + vocab_size)
    return float(-np.mean(np.log(probs[np.asarray(val_tokens, dtype=np.int64)])))


def sample_windows(
    tokens: np.ndarray, seq_len: int, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """batch_size random contiguous windows [batch, seq_len]."""
    if len(tokens) < seq_len:
        raise DimensionError(f"stream of {len(tokens)} tokens is shorter than seq_len {seq_len}")
    starts = rng.integers(0, len(tokens) - seq_len + 1, size=batch_size)
    return np.stack([tokens[s : s + seq_len] for s in starts])


def sequential_windows(tokens: np.ndarray, seq_len: int, max_windows: int = 0) -> np.ndarray:
    """Non-overlapping evaluation windows [k, seq_len], in stream order."""
    count = len(tokens) // seq_len
    if max_windows > 0:
        count = min(count, max_windows)
    if count == 0:
        raise DimensionError(
            f"stream of {len(tokens)} tokens yields no windows of length {seq_len}"
        )
    return tokens[: count * seq_len].reshape(count, seq_len)


# -- synthetic corpus ---------------------------------------------------------

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _make_word(rng: np.random.Generator) -> str:
    syllables = int(rng.integers(1, 4))
    parts = []
    for _ in range(syllables):
        parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
        parts.append(_VOWELS[int(rng.integers(len(_VOWELS)))])
        if rng.random() < 0.3:
            parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
    return "".join(parts)


def synthetic_corpus(min_bytes: int = 120_000, seed: int = 7, vocab_words: int = 800) -> str:
    """Deterministic word-salad text with a heavy-tailed word distribution.

    The tail makes frequent words reappear constantly, so the stream has
    strong sub-word and word-level structure for a sequence model to learn,
    while staying pure ASCII for byte-mode training.
    """
    rng = np.random.default_rng(seed)
    words = sorted({_make_word(rng) for _ in range(vocab_words * 2)})
    rng.shuffle(words)
    words = words[:vocab_words]
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    probs = 1.0 / ranks**1.1
    probs /= probs.sum()
    pieces = []
    size = 0
    while size < min_bytes:
        length = int(rng.integers(4, 13))
        chosen = rng.choice(len(words), size=length, p=probs)
        sentence = " ".join(words[int(c)] for c in chosen)
        sentence = sentence[0].upper() + sentence[1:] + "."
        pieces.append(sentence)
        size += len(sentence) + 1
    return " ".join(pieces) + "\n"


def write_synthetic_corpus(path: str, min_bytes: int = 120_000, seed: int = 7) -> dict:
    text = synthetic_corpus(min_bytes=min_bytes, seed=seed)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return {"path": path, "bytes": len(text.encode("utf-8")), "seed": seed}
