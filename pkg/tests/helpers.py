"""Shared fixtures: sine-speech audio synthesis, toy corpora, and
independent brute-force oracles kept deliberately separate from the
library code paths they check."""

from __future__ import annotations

import json
import wave
import zlib

import numpy as np

from speechground.corpus import Utterance

SAMPLE_RATE = 16000


def token_frequency(token: str) -> float:
    """Stable tone frequency for a token, in the speech band."""
    return 300.0 + (zlib.crc32(token.encode("utf-8")) % 2800)


def sine_speech(tokens, rate=SAMPLE_RATE, tone_s=0.12, gap_s=0.02, amplitude=0.3):
    """Concatenated pure tones, one per token; deterministic 'speech'."""
    pieces = []
    gap = np.zeros(int(gap_s * rate))
    for token in tokens:
        freq = token_frequency(token)
        t = np.arange(int(tone_s * rate)) / rate
        pieces.append(amplitude * np.sin(2 * np.pi * freq * t))
        pieces.append(gap)
    if not pieces:
        pieces.append(np.zeros(int(tone_s * rate)))
    return np.concatenate(pieces)


def write_wav(path, samples, rate=SAMPLE_RATE, channels=1):
    samples = np.asarray(samples)
    if channels > 1 and samples.ndim == 1:
        samples = np.tile(samples[:, None], (1, channels))
    pcm = np.clip(samples * 32767.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(pcm.tobytes())


def make_utterance(ident, transcript, register="cds", role="caregiver", duration=1.0):
    return Utterance(
        id=ident,
        register=register,
        speaker_role=role,
        transcript=transcript,
        audio_path=f"{ident}.wav",
        duration_s=duration,
    )


def write_manifest_lines(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def manifest_record(ident, transcript, register="cds", role="caregiver", duration=1.0,
                    audio_path=None):
    return {
        "id": ident,
        "register": register,
        "speaker_role": role,
        "transcript": transcript,
        "audio_path": audio_path if audio_path is not None else f"{ident}.wav",
        "duration_s": duration,
    }


# ------------------------------------------------------------------ oracles


def naive_matmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def brute_force_rank(query, candidates, true_index):
    """Sort-based rank with pessimistic ties, independent of the library."""
    query = np.asarray(query, dtype=np.float64)
    sims = []
    for cand in np.asarray(candidates, dtype=np.float64):
        sims.append(
            float(np.dot(query, cand) / (np.linalg.norm(query) * np.linalg.norm(cand)))
        )
    true_sim = sims[true_index]
    rank = 1
    for j, s in enumerate(sims):
        if j != true_index and s >= true_sim:
            rank += 1
    return rank


def brute_force_margin_loss(s, margin):
    s = np.asarray(s)
    b = s.shape[0]
    total = 0.0
    for i in range(b):
        for j in range(b):
            if i == j:
                continue
            total += max(0.0, margin - s[i, i] + s[i, j])
            total += max(0.0, margin - s[j, j] + s[i, j])
    return total / b


def naive_mfcc_reference(samples, rate=16000, window=400, hop=160, n_fft=512,
                         n_mels=40, n_ceps=13, preemphasis=0.97, log_floor=1e-10):
    """Loop-based MFCC written independently of speechground.features:
    explicit DFT per frame, hand-built triangular HTK-mel filters,
    textbook orthonormal DCT-II."""
    x = np.asarray(samples, dtype=np.float64)
    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    for n in range(1, len(x)):
        emphasized[n] = x[n] - preemphasis * x[n - 1]

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_inv(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = mel_inv(np.linspace(mel(0.0), mel(rate / 2.0), n_mels + 2))
    n_bins = n_fft // 2 + 1
    fbank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        for b in range(n_bins):
            f = b * rate / n_fft
            if edges[m] <= f <= edges[m + 1]:
                fbank[m, b] = (f - edges[m]) / (edges[m + 1] - edges[m])
            elif edges[m + 1] < f <= edges[m + 2]:
                fbank[m, b] = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1])

    n_frames = (len(x) - window) // hop + 1
    ham = 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(window) / (window - 1))
    ceps = np.zeros((n_frames, n_ceps))
    ks = np.arange(n_bins)
    for t in range(n_frames):
        frame = emphasized[t * hop : t * hop + window] * ham
        padded = np.zeros(n_fft)
        padded[:window] = frame
        spectrum = np.zeros(n_bins)
        ns = np.arange(n_fft)
        for k in ks:
            spectrum[k] = np.abs(np.sum(padded * np.exp(-2j * np.pi * k * ns / n_fft)))
        logmel = np.log(np.maximum(fbank @ spectrum, log_floor))
        for c in range(n_ceps):
            basis = np.cos(np.pi * c * (2 * np.arange(n_mels) + 1) / (2 * n_mels))
            scale = np.sqrt(1.0 / n_mels) if c == 0 else np.sqrt(2.0 / n_mels)
            ceps[t, c] = scale * np.sum(logmel * basis)
    return ceps
