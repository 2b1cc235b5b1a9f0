"""Descriptive register statistics from a JSONL manifest.

Builds a tiny two-register manifest in memory, then walks the same
tokenize -> filter -> stats path the `speechground stats` subcommand uses.
Note the words-per-second convention: it is the ratio of the two column
means (words/utterance over seconds/utterance), not a mean of
per-utterance rates.
"""

import json

from speechground.corpus import Utterance, compute_stats, stats_table

ROWS = [
    ("c1", "cds", "look at the doggie", 2.9),
    ("c2", "cds", "who's a good boy", 2.1),
    ("c3", "cds", "yes you are", 1.7),
    ("a1", "ads", "the committee deferred the vote until thursday", 3.4),
    ("a2", "ads", "traffic on the bridge was terrible again", 3.1),
]

utterances = [
    Utterance(
        id=ident,
        register=register,
        speaker_role="caregiver",
        transcript=text,
        audio_path=f"{ident}.wav",
        duration_s=dur,
    )
    for ident, register, text, dur in ROWS
]

# the manifest on disk is one JSON object per line with the same fields
print("manifest line:", json.dumps(utterances[0].to_record()))
print()

stats = {
    register: compute_stats([u for u in utterances if u.register == register])
    for register in ("cds", "ads")
}
print(stats_table(stats))
print()
cds, ads = stats["cds"], stats["ads"]
print(f"check: cds words/second = {cds.words_per_utterance:.2f} / "
      f"{cds.utterance_length_s:.2f} = {cds.words_per_second:.2f}")
