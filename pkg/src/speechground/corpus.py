"""Corpus ingestion, filtering, balancing, splitting, and descriptive stats.

Manifests are UTF-8 JSON-lines files, one record per utterance with fields
``id``, ``register`` ("cds"|"ads"), ``speaker_role``, ``transcript``,
``audio_path``, ``duration_s``. Unknown fields are ignored. All random
selection is driven by numpy's PCG64 generator seeded explicitly, so the
filter -> balance -> split pipeline is byte-for-byte reproducible.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

REGISTERS = ("cds", "ads")
SPEAKER_ROLES = ("caregiver", "child", "experimenter", "multiple")

_MANIFEST_FIELDS = ("id", "register", "speaker_role", "transcript", "audio_path", "duration_s")


class ManifestError(ValueError):
    pass


_BRACKETED = re.compile(r"\[[^\]]*\]|<[^>]*>")
_PUNCT = str.maketrans("", "", r"""!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~""")


def tokenize_transcript(transcript: str) -> list[str]:
    """Lowercased, punctuation-stripped word tokens.

    Bracketed annotation spans and tokens starting with '@' (annotation
    codes) are removed. Empty input yields an empty list.
    """
    text = _BRACKETED.sub(" ", transcript).lower()
    tokens = []
    for raw in text.split():
        if raw.startswith("@"):
            continue
        tok = raw.translate(_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class Utterance:
    """One transcribed speech segment."""

    id: str
    register: str
    speaker_role: str
    transcript: str
    audio_path: str
    duration_s: float
    tokens: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        if self.register not in REGISTERS:
            raise ManifestError(f"utterance {self.id!r}: unknown register {self.register!r}")
        if self.speaker_role not in SPEAKER_ROLES:
            raise ManifestError(
                f"utterance {self.id!r}: unknown speaker_role {self.speaker_role!r}"
            )
        if self.tokens is None:
            object.__setattr__(self, "tokens", tuple(tokenize_transcript(self.transcript)))

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "register": self.register,
            "speaker_role": self.speaker_role,
            "transcript": self.transcript,
            "audio_path": self.audio_path,
            "duration_s": self.duration_s,
        }


def parse_manifest(path) -> list[Utterance]:
    """Read a JSON-lines manifest; order preserved, ids checked for uniqueness."""
    utterances = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record: {exc}") from None
            missing = [k for k in _MANIFEST_FIELDS if k not in record]
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: record missing field(s) {', '.join(missing)}"
                )
            if record["id"] in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {record['id']!r}")
            seen.add(record["id"])
            try:
                duration = float(record["duration_s"])
            except (TypeError, ValueError):
                raise ManifestError(
                    f"{path}:{lineno}: duration_s is not a number"
                ) from None
            if duration < 0:
                raise ManifestError(f"{path}:{lineno}: negative duration_s")
            try:
                utterances.append(
                    Utterance(
                        id=str(record["id"]),
                        register=str(record["register"]),
                        speaker_role=str(record["speaker_role"]),
                        transcript=str(record["transcript"]),
                        audio_path=str(record["audio_path"]),
                        duration_s=duration,
                    )
                )
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return utterances


def write_manifest(utterances, path):
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            fh.write(json.dumps(utt.to_record(), sort_keys=True) + "\n")


def filter_utterances(utterances, keep_role="caregiver") -> list[Utterance]:
    """Keep only utterances with the given speaker role ('multiple' is always excluded)."""
    return [u for u in utterances if u.speaker_role == keep_role and u.speaker_role != "multiple"]


def drop_unusable(utterances) -> list[Utterance]:
    """Drop utterances with no tokens after cleaning or non-positive duration."""
    kept = []
    for u in utterances:
        if not u.tokens:
            log.warning("dropping utterance %s: no tokens after cleaning", u.id)
        elif u.duration_s <= 0:
            log.warning("dropping utterance %s: non-positive duration", u.id)
        else:
            kept.append(u)
    return kept


def balance_registers(cds, ads, seed):
    """Uniformly subsample the larger register (without replacement) down to
    the smaller one's size; the smaller register is returned unchanged.
    Original order is preserved within the subsample."""
    if not cds or not ads:
        raise ValueError("balance_registers: both registers must be non-empty")
    n = min(len(cds), len(ads))
    rng = np.random.default_rng(seed)

    def subsample(items):
        if len(items) == n:
            return list(items)
        idx = np.sort(rng.choice(len(items), size=n, replace=False))
        return [items[i] for i in idx]

    return subsample(cds), subsample(ads)


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    n_validation: int
    n_test: int
    remainder_to_train: bool = True


def split_corpus(utterances, spec: SplitSpec) -> dict[str, list[Utterance]]:
    """Disjoint, exhaustive train/validation/test split, deterministic in seed.

    The permuted corpus is carved as validation first, then test; the
    remainder is the training set.
    """
    n = len(utterances)
    if spec.n_validation < 0 or spec.n_test < 0 or spec.n_validation + spec.n_test >= n:
        raise ValueError(
            f"split_corpus: infeasible spec (n={n}, "
            f"n_validation={spec.n_validation}, n_test={spec.n_test})"
        )
    for u in utterances:
        if u.duration_s <= 0:
            raise ValueError(f"split_corpus: utterance {u.id} has non-positive duration")
    perm = np.random.default_rng(spec.seed).permutation(n)
    val_idx = perm[: spec.n_validation]
    test_idx = perm[spec.n_validation : spec.n_validation + spec.n_test]
    train_idx = perm[spec.n_validation + spec.n_test :]
    return {
        "train": [utterances[i] for i in sorted(train_idx)],
        "validation": [utterances[i] for i in sorted(val_idx)],
        "test": [utterances[i] for i in sorted(test_idx)],
    }


def write_splits(splits, stem):
    """Write the three split manifests as <stem>.train / .val / .test."""
    suffix = {"train": "train", "validation": "val", "test": "test"}
    paths = {}
    for name, utts in splits.items():
        path = f"{stem}.{suffix[name]}"
        write_manifest(utts, path)
        paths[name] = path
    return paths


@dataclass(frozen=True)
class CorpusStats:
    vocabulary_size: int
    total_words: int
    type_token_ratio: float
    words_per_utterance: float
    utterance_length_s: float
    words_per_second: float


def compute_stats(utterances) -> CorpusStats:
    """Descriptive statistics over lowercased tokens.

    words_per_second is the ratio of the two component means (mean words
    per utterance over mean utterance length), not a per-utterance mean.
    """
    if not utterances:
        raise ValueError("compute_stats: empty utterance list")
    vocab = set()
    total_words = 0
    total_duration = 0.0
    for u in utterances:
        vocab.update(u.tokens)
        total_words += len(u.tokens)
        total_duration += u.duration_s
    n = len(utterances)
    words_per_utt = total_words / n
    mean_len = total_duration / n
    return CorpusStats(
        vocabulary_size=len(vocab),
        total_words=total_words,
        type_token_ratio=len(vocab) / total_words if total_words else 0.0,
        words_per_utterance=words_per_utt,
        utterance_length_s=mean_len,
        words_per_second=words_per_utt / mean_len if mean_len > 0 else 0.0,
    )


def stats_table(stats_by_register: dict[str, CorpusStats]) -> str:
    """Render a two-column descriptive-statistics table."""
    cols = list(stats_by_register)
    rows = [
        ("Vocabulary size", "vocabulary_size", "{:,d}"),
        ("Total nr. of words", "total_words", "{:,d}"),
        ("Type/token ratio", "type_token_ratio", "{:.3f}"),
        ("Words per utterance", "words_per_utterance", "{:.2f}"),
        ("Utterance length in seconds", "utterance_length_s", "{:.2f}"),
        ("Words per second", "words_per_second", "{:.2f}"),
    ]
    width = max(len(r[0]) for r in rows)
    lines = [
        "Dataset".ljust(width) + "".join(f"{c.upper():>12}" for c in cols)
    ]
    for label, attr, fmt in rows:
        cells = "".join(
            f"{fmt.format(getattr(stats_by_register[c], attr)):>12}" for c in cols
        )
        lines.append(label.ljust(width) + cells)
    return "\n".join(lines)
