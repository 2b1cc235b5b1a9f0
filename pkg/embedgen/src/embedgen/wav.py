"""Minimal PCM-16 mono WAV output (stdlib ``wave`` under the hood)."""

from __future__ import annotations

import os
import tempfile
import wave

import numpy as np


def write_wav(path, samples, rate: int) -> float:
    """Atomically write mono 16-bit PCM; returns the duration in seconds.

    The file appears under its final name only once fully written
    (write-temp-then-rename), so interrupted runs never leave half files
    that a resume pass would mistake for finished work.
    """
    samples = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (samples * 32767.0).astype("<i2")
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh, wave.open(fh, "wb") as wav:
            wav.setnchannels(1)
            wav.setsampwidth(2)
            wav.setframerate(rate)
            wav.writeframes(pcm.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(pcm) / rate
