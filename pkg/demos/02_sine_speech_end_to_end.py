"""End-to-end miniature experiment on synthetic "sine-speech".

Each vocabulary token is rendered as a fixed pure tone, so an utterance
becomes a short melody; target embeddings are built from per-token random
vectors. The encoder has to learn the tone-to-vector correspondence from
audio alone — the same grounding problem as the real corpus, shrunk to
seconds of compute.

Run with ``python3 demos/02_sine_speech_end_to_end.py``. Artifacts land in
./demo_out (safe to delete).
"""

import shutil
import zlib
from pathlib import Path

import numpy as np

from speechground import retrieval
from speechground.encoder import EncoderConfig, SpeechEncoder
from speechground.features import AudioBuffer, MfccConfig, mfcc
from speechground.training import TrainConfig, fit

OUT = Path("demo_out")
if OUT.exists():
    shutil.rmtree(OUT)

rng = np.random.default_rng(1)
RATE = 16000


def sine_speech(tokens):
    parts = []
    for tok in tokens:
        freq = 300 + zlib.crc32(tok.encode()) % 2800
        t = np.arange(int(0.12 * RATE)) / RATE
        parts.append(0.3 * np.sin(2 * np.pi * freq * t))
        parts.append(np.zeros(int(0.02 * RATE)))
    return np.concatenate(parts)


# --- build a 40-utterance corpus -------------------------------------------

vocab = [f"word{i}" for i in range(12)]
token_vec = {tok: rng.standard_normal(32) for tok in vocab}

ids, features, targets = [], {}, {}
mfcc_cfg = MfccConfig(cmvn=True)
for i in range(40):
    ident = f"utt{i}"
    tokens = [vocab[k] for k in rng.integers(0, len(vocab), size=2)]
    audio = AudioBuffer(sine_speech(tokens), RATE)
    features[ident] = mfcc(audio, mfcc_cfg, utterance_id=ident).frames
    vec = sum(token_vec[t] for t in tokens)
    targets[ident] = (vec / np.linalg.norm(vec)).astype(np.float32)
    ids.append(ident)

train_ids, val_ids = ids[:32], ids[32:]
print(f"corpus: {len(train_ids)} train / {len(val_ids)} validation utterances, "
      f"{features[ids[0]].shape[1]}-dim MFCC frames")

# --- train a small encoder --------------------------------------------------

encoder = SpeechEncoder(
    EncoderConfig(
        input_dim=39, conv_channels=32, conv_kernel=6, conv_stride=2,
        gru_hidden=24, gru_layers=2, embed_dim=32, attention_dim=32, init_seed=0,
    ),
    dtype=np.float32,
)
print(f"encoder: {encoder.parameter_count():,} parameters")

result = fit(encoder, train_ids, val_ids, features, targets,
             TrainConfig(epochs=40, batch_size=16), OUT / "run")
print(f"best epoch {result.best_epoch} "
      f"(validation recall@1 {result.best_val_recall1:.2f})")

# --- inspect retrieval ------------------------------------------------------

report = retrieval.evaluate(encoder, train_ids, features, targets, test_set="train")
print(f"train-set retrieval over {report.n_candidates} candidates: "
      f"recall@1 {report.recall1:.2f}, recall@5 {report.recall5:.2f}, "
      f"median rank {report.median_rank:.1f}")
print(f"trajectory log: {result.trajectory_csv}")
