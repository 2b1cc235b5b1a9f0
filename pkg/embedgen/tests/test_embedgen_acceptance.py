"""Acceptance: everything embedgen writes validates against the core CLI.

Prints one PASS/FAIL line. Runs fully offline: audio comes from the
sine-speech fake provider and embeddings from the hash model. The core
toolkit is exercised strictly through its command line and on-disk
formats.
"""

import subprocess
import sys
from contextlib import contextmanager

from embedgen.embed import embed_transcripts
from embedgen.manifest import write_manifest
from embedgen.semb import read_embedding_file
from embedgen.tts import SineSpeechTTS, synthesize_speech

VOICES = [f"v{i}" for i in range(1, 7)]


@contextmanager
def criterion(num, title):
    try:
        yield
    except BaseException:
        print(f"[criterion {num}] {title}: FAIL")
        raise
    print(f"[criterion {num}] {title}: PASS")


def run_core(*args):
    return subprocess.run(
        [sys.executable, "-m", "speechground.cli", *args],
        capture_output=True,
        text=True,
    )


def test_criterion_9_outputs_validate_against_core(tmp_path):
    with criterion(9, "embedgen outputs pass the core toolkit's --dry-run"):
        rows = []
        for register in ("cds", "ads"):
            for i in range(8):
                rows.append(
                    {
                        "id": f"{register}{i}",
                        "register": register,
                        "speaker_role": "caregiver",
                        "transcript": f"{register} word{i} word{i + 1}",
                    }
                )
        source = tmp_path / "source.jsonl"
        write_manifest(rows, source)

        # offline synthesis + embedding
        manifest = tmp_path / "manifest.jsonl"
        audio_dir = tmp_path / "audio"
        result = synthesize_speech(
            source, manifest, audio_dir, SineSpeechTTS(), VOICES, seed=3
        )
        assert result.failed == 0 and result.synthesized == 16

        semb = tmp_path / "targets.semb"
        embedded = embed_transcripts(manifest, "hash-sim-768", semb)
        assert embedded.header.count == 16

        # bit-identical vector round trip
        _, first = read_embedding_file(semb)
        _, second = read_embedding_file(semb)
        assert all(first[k].tobytes() == second[k].tobytes() for k in first)

        # the core validates the manifest, audio, and embedding file
        common = [
            f"--paths.manifest={manifest}",
            f"--paths.audio_root={audio_dir}",
            f"--paths.embeddings={semb}",
            f"--paths.feature_cache={tmp_path / 'features'}",
            f"--paths.out_dir={tmp_path / 'out'}",
            "--corpus.n_validation=2",
            "--corpus.n_test=2",
        ]
        steps = [
            ("ingest", ["ingest", *common]),
            ("stats dry-run", ["stats", *common, "--dry-run"]),
            ("featurize dry-run", ["featurize", *common, "--dry-run"]),
            ("train dry-run", ["train", *common, "--dry-run"]),
        ]
        for label, argv in steps:
            proc = run_core(*argv)
            assert proc.returncode == 0, f"{label}: {proc.stderr or proc.stdout}"

        # sanity: the validators do reject a corrupted embedding file
        semb.write_bytes(b"XXXX" + semb.read_bytes()[4:])
        proc = run_core("train", *common, "--dry-run")
        assert proc.returncode == 1
