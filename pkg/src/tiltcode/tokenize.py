"""Tokenizers mapping raw bytes to integer symbols and back."""
from dataclasses import dataclass
import json
import re

import numpy as np

from .errors import TiltcodeError

UTF8_ALPHABET = 0x110000
_WORD_RE = re.compile(r"\s+|\S+")

IDS = {"int": 0, "byte": 1, "utf8": 2, "word": 3}
NAMES = {v: k for k, v in IDS.items()}


class TokenizeError(TiltcodeError, ValueError):
    pass


@dataclass(frozen=True)
class Tokenization:
    mode: str
    tokens: np.ndarray
    m: int
    vocab: tuple = ()  # word mode only: index -> token text

    @property
    def tokenizer_id(self):
        return IDS[self.mode]


def tokenize(data, mode):
    """Split raw bytes into symbols for ``mode`` in {byte, utf8, word}."""
    if mode == "byte":
        return Tokenization(mode, np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64), 256)
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TokenizeError(f"input is not valid UTF-8: {exc}") from None
    if mode == "utf8":
        toks = np.fromiter((ord(ch) for ch in text), dtype=np.int64, count=len(text))
        return Tokenization(mode, toks, UTF8_ALPHABET)
    if mode == "word":
        words = _WORD_RE.findall(text)
        vocab = sorted(set(words))
        index = {w: i for i, w in enumerate(vocab)}
        toks = np.fromiter((index[w] for w in words), dtype=np.int64, count=len(words))
        return Tokenization(mode, toks, max(1, len(vocab)), tuple(vocab))
    raise TokenizeError(f"unknown tokenizer {mode!r}")


def detokenize(tokens, mode, vocab=()):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size and tokens.min() < 0:
        raise TokenizeError("negative token")
    if mode == "byte":
        if tokens.size and tokens.max() > 255:
            raise TokenizeError("byte token above 255")
        return tokens.astype(np.uint8).tobytes()
    if mode == "utf8":
        if tokens.size and tokens.max() >= UTF8_ALPHABET:
            raise TokenizeError("code point beyond U+10FFFF")
        try:
            return "".join(map(chr, tokens.tolist())).encode("utf-8")
        except UnicodeEncodeError:
            raise TokenizeError("surrogate code point in the token stream") from None
    if mode == "word":
        if tokens.size and tokens.max() >= len(vocab):
            raise TokenizeError("token index beyond the vocabulary")
        return "".join(vocab[t] for t in tokens.tolist()).encode("utf-8")
    raise TokenizeError(f"unknown tokenizer {mode!r}")


def save_vocab(path, vocab):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"vocab": list(vocab)}, fh, ensure_ascii=False)


def load_vocab(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or not isinstance(obj.get("vocab"), list):
        raise TokenizeError("malformed vocabulary file")
    return tuple(obj["vocab"])


def corpus_stats(tokens, m):
    """Distinct symbols, hapax and dis legomena counts of a token sequence."""
    counts = np.bincount(np.asarray(tokens, dtype=np.int64), minlength=m)
    return {
        "m": int(m),
        "n": int(counts.sum()),
        "distinct": int(np.count_nonzero(counts)),
        "hapax": int(np.count_nonzero(counts == 1)),
        "dis_legomena": int(np.count_nonzero(counts == 2)),
    }
