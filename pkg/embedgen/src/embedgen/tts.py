"""Batch text-to-speech synthesis with resume, retry, and a local fake.

The provider sits behind a two-method client interface so tests and the
synthetic-register experiments run fully offline via ``SineSpeechTTS``:
each token is rendered as a fixed pure tone derived from its hash, with
a small per-voice pitch offset.
"""

from __future__ import annotations

import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .manifest import read_manifest, write_manifest
from .wav import write_wav


class TTSError(RuntimeError):
    pass


@dataclass(frozen=True)
class VoiceSpec:
    """One utterance's assigned voice, reproducible from the pool seed."""

    voice: str
    seed: int


def assign_voices(utterance_ids, voice_pool, seed: int) -> dict[str, VoiceSpec]:
    """Round-robin over a seeded shuffle of the pool, in manifest order."""
    if not voice_pool:
        raise ValueError("empty voice pool")
    pool = list(voice_pool)
    np.random.default_rng(seed).shuffle(pool)
    return {
        utt_id: VoiceSpec(voice=pool[i % len(pool)], seed=seed)
        for i, utt_id in enumerate(utterance_ids)
    }


class SineSpeechTTS:
    """Offline fake provider: one pure tone per whitespace token."""

    rate = 16000
    tone_s = 0.12
    gap_s = 0.02

    def synthesize(self, text: str, voice: str) -> tuple[np.ndarray, int]:
        # each voice shifts the base pitch so identical text still yields
        # audibly (and numerically) distinct renderings per voice
        offset = zlib.crc32(voice.encode("utf-8")) % 200
        parts = [np.zeros(0)]
        t = np.arange(int(self.tone_s * self.rate)) / self.rate
        for token in text.lower().split():
            freq = 300 + offset + zlib.crc32(token.encode("utf-8")) % 2800
            parts.append(0.3 * np.sin(2 * np.pi * freq * t))
            parts.append(np.zeros(int(self.gap_s * self.rate)))
        if len(parts) == 1:
            parts.append(np.zeros(int(self.gap_s * self.rate)))  # silent clip
        return np.concatenate(parts), self.rate


@dataclass(frozen=True)
class SynthesisResult:
    synthesized: int
    skipped: int
    failed: int
    manifest_path: str
    failures_path: str


def synthesize_speech(
    manifest_path,
    out_manifest_path,
    audio_dir,
    client,
    voice_pool,
    seed: int = 0,
    max_attempts: int = 3,
    backoff_s: float = 1.0,
    parallelism: int = 1,
) -> SynthesisResult:
    """Render one WAV per utterance and rewrite the manifest.

    Existing outputs are kept (resume after interruption); utterances that
    still fail after ``max_attempts`` tries land in ``failures.txt`` next to
    the manifest and the run continues without them.
    """
    records = read_manifest(manifest_path)
    audio_dir = Path(audio_dir)
    audio_dir.mkdir(parents=True, exist_ok=True)
    voices = assign_voices([r["id"] for r in records], voice_pool, seed)

    def render(record):
        utt_id = record["id"]
        wav_path = audio_dir / f"{utt_id}.wav"
        if wav_path.exists():
            return utt_id, "skipped", _measure(wav_path), None
        last_error = None
        for attempt in range(max_attempts):
            if attempt:
                time.sleep(backoff_s * 2 ** (attempt - 1))
            try:
                samples, rate = client.synthesize(record["transcript"], voices[utt_id].voice)
                duration = write_wav(wav_path, samples, rate)
                return utt_id, "synthesized", duration, None
            except Exception as exc:
                last_error = exc
        return utt_id, "failed", None, str(last_error)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        outcomes = list(pool.map(render, records))

    durations = {}
    failures = []
    counts = {"synthesized": 0, "skipped": 0, "failed": 0}
    for utt_id, status, duration, error in outcomes:
        counts[status] += 1
        if status == "failed":
            failures.append((utt_id, error))
        else:
            durations[utt_id] = duration

    out_records = []
    for record in records:
        if record["id"] not in durations:
            continue
        updated = dict(record)
        updated["audio_path"] = f"{record['id']}.wav"
        updated["duration_s"] = round(durations[record["id"]], 6)
        out_records.append(updated)
    write_manifest(out_records, out_manifest_path)

    failures_path = Path(out_manifest_path).with_name("failures.txt")
    with open(failures_path, "w", encoding="utf-8") as fh:
        for utt_id, error in failures:
            fh.write(f"{utt_id}\t{error}\n")

    return SynthesisResult(
        synthesized=counts["synthesized"],
        skipped=counts["skipped"],
        failed=counts["failed"],
        manifest_path=str(out_manifest_path),
        failures_path=str(failures_path),
    )


def _measure(wav_path) -> float:
    import wave

    with wave.open(str(wav_path), "rb") as wav:
        return wav.getnframes() / wav.getframerate()
