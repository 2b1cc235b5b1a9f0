"""MFCC front end: WAV loading, mel-cepstral features, and a binary cache.

Pipeline: pre-emphasis -> Hamming-windowed framing -> magnitude spectrum
-> triangular mel filterbank (HTK mel scale) -> log with floor ->
orthonormal DCT-II -> optional delta / delta-delta appendage. Defaults
(13 cepstra + deltas = 39 dims, 25 ms window / 10 ms hop, 40 filters)
follow the conventional speech front-end settings; audio is canonicalized
to 16 kHz mono on load.
"""

from __future__ import annotations

import struct
import wave
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.signal import resample_poly

TARGET_RATE_HZ = 16000


class AudioError(ValueError):
    pass


class CacheError(ValueError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate_hz: int


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 40
    n_ceps: int = 13
    preemphasis: float = 0.97
    with_deltas: bool = True
    log_floor: float = 1e-10
    cmvn: bool = False  # per-utterance mean/variance normalization

    def __post_init__(self):
        if self.n_ceps > self.n_mels:
            raise ValueError("n_ceps must not exceed n_mels")
        if self.window_ms < self.hop_ms:
            raise ValueError("window must be at least one hop long")
        if self.n_fft < self.window_samples():
            raise ValueError("n_fft shorter than the analysis window")

    def window_samples(self, rate=TARGET_RATE_HZ) -> int:
        return int(round(self.window_ms * rate / 1000.0))

    def hop_samples(self, rate=TARGET_RATE_HZ) -> int:
        return int(round(self.hop_ms * rate / 1000.0))

    @property
    def feature_dim(self) -> int:
        return self.n_ceps * 3 if self.with_deltas else self.n_ceps

    def digest(self) -> int:
        key = "|".join(
            f"{f}={getattr(self, f)}"
            for f in (
                "window_ms", "hop_ms", "n_fft", "n_mels", "n_ceps",
                "preemphasis", "with_deltas", "log_floor", "cmvn",
            )
        )
        return zlib.crc32(key.encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # T x D, time-major
    utterance_id: str
    config_digest: int


def load_audio(path) -> AudioBuffer:
    """Load a PCM WAV file as mono float samples at 16 kHz.

    Multi-channel audio is downmixed by channel mean; other sample rates
    are resampled by polyphase band-limited interpolation.
    """
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            sampwidth = wav.getsampwidth()
            rate = wav.getframerate()
            n_frames = wav.getnframes()
            raw = wav.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise AudioError(f"{path}: not a readable PCM WAV file ({exc})") from None
    if n_frames == 0:
        raise AudioError(f"{path}: empty audio")
    if sampwidth == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif sampwidth == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    elif sampwidth == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        raise AudioError(f"{path}: unsupported sample width {sampwidth} bytes")
    samples = data.reshape(-1, n_channels).mean(axis=1)
    if rate != TARGET_RATE_HZ:
        samples = resample_audio(samples, rate, TARGET_RATE_HZ)
    peak = np.max(np.abs(samples))
    if peak > 1.0:
        samples = samples / peak
    return AudioBuffer(samples=samples, sample_rate_hz=TARGET_RATE_HZ)


def resample_audio(samples, rate_in, rate_out):
    g = np.gcd(int(rate_in), int(rate_out))
    return resample_poly(samples, rate_out // g, rate_in // g)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, rate=TARGET_RATE_HZ, fmin=0.0, fmax=None):
    """Triangular filters on the HTK mel scale; (n_fft//2 + 1) x n_mels."""
    if fmax is None:
        fmax = rate / 2.0
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    fbank = np.zeros((n_fft // 2 + 1, n_mels))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fbank[:, m] = np.maximum(0.0, np.minimum(up, down))
    return fbank


def frame_count(n_samples, window, hop):
    if n_samples < window:
        raise AudioError(
            f"audio of {n_samples} samples shorter than one window ({window})"
        )
    return (n_samples - window) // hop + 1


def mfcc(audio: AudioBuffer, cfg: MfccConfig = MfccConfig(), utterance_id="") -> FeatureMatrix:
    """Mel-frequency cepstral coefficients for one utterance, time-major."""
    x = np.asarray(audio.samples, dtype=np.float64)
    rate = audio.sample_rate_hz
    window = cfg.window_samples(rate)
    hop = cfg.hop_samples(rate)
    n_frames = frame_count(len(x), window, hop)

    emphasized = np.concatenate(([x[0]], x[1:] - cfg.preemphasis * x[:-1]))
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(window)

    spectrum = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1))
    fbank = mel_filterbank(cfg.n_mels, cfg.n_fft, rate)
    mel_energies = spectrum @ fbank
    log_mel = np.log(np.maximum(mel_energies, cfg.log_floor))
    ceps = dct(log_mel, type=2, norm="ortho", axis=1)[:, : cfg.n_ceps]

    if cfg.with_deltas:
        ceps = append_deltas(ceps)
    if cfg.cmvn:
        mu = ceps.mean(axis=0)
        sd = ceps.std(axis=0)
        ceps = (ceps - mu) / np.maximum(sd, 1e-8)
    return FeatureMatrix(frames=ceps, utterance_id=utterance_id, config_digest=cfg.digest())


def delta(m, width=2):
    """Regression-slope deltas over +/-width frames with edge replication."""
    m = np.asarray(m, dtype=np.float64)
    padded = np.concatenate([m[:1].repeat(width, axis=0), m, m[-1:].repeat(width, axis=0)])
    denom = 2 * sum(k * k for k in range(1, width + 1))
    out = np.zeros_like(m)
    for k in range(1, width + 1):
        out += k * (padded[width + k : width + k + len(m)] - padded[width - k : width - k + len(m)])
    return out / denom


def append_deltas(m):
    """Append delta and delta-delta columns: T x C -> T x 3C."""
    d = delta(m)
    dd = delta(d)
    return np.concatenate([m, d, dd], axis=1)


# cache layout (little-endian): magic "MFCC", u32 version, u32 T, u32 D,
# u32 config digest, T*D float32 row-major, u16 id length, UTF-8 id
_MAGIC = b"MFCC"
_VERSION = 1


def write_feature_cache(features: FeatureMatrix, path):
    frames = np.ascontiguousarray(features.frames, dtype="<f4")
    t, d = frames.shape
    ident = features.utterance_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, t, d, features.config_digest))
        fh.write(frames.tobytes())
        fh.write(struct.pack("<H", len(ident)))
        fh.write(ident)


def read_feature_cache(path, expected_digest=None) -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != _MAGIC:
        raise CacheError(f"{path}: not a feature cache (bad magic)")
    version, t, d, digest = struct.unpack_from("<IIII", blob, 4)
    if version != _VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    if expected_digest is not None and digest != expected_digest:
        raise CacheError(f"{path}: stale cache (config digest mismatch)")
    need = 20 + 4 * t * d + 2
    if len(blob) < need:
        raise CacheError(f"{path}: truncated cache file")
    frames = np.frombuffer(blob, dtype="<f4", count=t * d, offset=20).reshape(t, d)
    (id_len,) = struct.unpack_from("<H", blob, 20 + 4 * t * d)
    if len(blob) != need + id_len:
        raise CacheError(f"{path}: truncated cache file")
    ident = blob[22 + 4 * t * d :].decode("utf-8")
    return FeatureMatrix(frames=frames.copy(), utterance_id=ident, config_digest=digest)
