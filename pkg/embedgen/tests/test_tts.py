import wave

import numpy as np
import pytest

from embedgen.manifest import read_manifest, write_manifest
from embedgen.tts import SineSpeechTTS, assign_voices, synthesize_speech

VOICES = [f"v{i}" for i in range(1, 7)]


def manifest(tmp_path, n=6, name="m.jsonl"):
    path = tmp_path / name
    write_manifest(
        [{"id": f"u{i}", "transcript": f"token{i} token{i+1}"} for i in range(n)],
        path,
    )
    return path


class FlakyTTS(SineSpeechTTS):
    """Fails the first `failures` calls for each utterance id."""

    def __init__(self, failures_by_text=()):
        self.failures = dict(failures_by_text)
        self.calls = []

    def synthesize(self, text, voice):
        self.calls.append((text, voice))
        if self.failures.get(text, 0) > 0:
            self.failures[text] -= 1
            raise ConnectionError("simulated service hiccup")
        return super().synthesize(text, voice)


class TestVoiceAssignment:
    def test_six_utterances_six_voices_each_once(self):
        ids = [f"u{i}" for i in range(6)]
        specs = assign_voices(ids, VOICES, seed=4)
        assert sorted(s.voice for s in specs.values()) == sorted(VOICES)

    def test_deterministic_in_seed(self):
        ids = [f"u{i}" for i in range(10)]
        assert assign_voices(ids, VOICES, 7) == assign_voices(ids, VOICES, 7)
        assert assign_voices(ids, VOICES, 7) != assign_voices(ids, VOICES, 8)

    def test_round_robin_wraps(self):
        ids = [f"u{i}" for i in range(13)]
        specs = assign_voices(ids, VOICES, seed=0)
        voices = [specs[i].voice for i in ids]
        assert voices[:6] == voices[6:12]
        assert voices[12] == voices[0]

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="pool"):
            assign_voices(["a"], [], seed=0)


class TestSineSpeechTTS:
    def test_distinct_tokens_distinct_audio(self):
        tts = SineSpeechTTS()
        a, rate = tts.synthesize("alpha", "v1")
        b, _ = tts.synthesize("bravo", "v1")
        assert rate == 16000
        assert not np.array_equal(a, b)

    def test_voice_changes_rendering(self):
        tts = SineSpeechTTS()
        a, _ = tts.synthesize("same words", "v1")
        b, _ = tts.synthesize("same words", "v2")
        assert not np.array_equal(a, b)

    def test_empty_text_yields_silence(self):
        samples, _ = SineSpeechTTS().synthesize("", "v1")
        assert len(samples) > 0
        np.testing.assert_array_equal(samples, 0)


class TestSynthesizeSpeech:
    def test_full_run_writes_audio_and_manifest(self, tmp_path):
        src = manifest(tmp_path)
        out_manifest = tmp_path / "synth.jsonl"
        result = synthesize_speech(
            src, out_manifest, tmp_path / "audio", SineSpeechTTS(), VOICES, seed=1
        )
        assert result.synthesized == 6 and result.failed == 0
        records = read_manifest(out_manifest)
        assert len(records) == 6
        for record in records:
            wav_path = tmp_path / "audio" / record["audio_path"]
            with wave.open(str(wav_path), "rb") as wav:
                assert wav.getnchannels() == 1
                assert wav.getsampwidth() == 2
                measured = wav.getnframes() / wav.getframerate()
            assert record["duration_s"] == pytest.approx(measured, abs=1e-6)

    def test_rerun_skips_existing(self, tmp_path):
        src = manifest(tmp_path)
        out_manifest = tmp_path / "synth.jsonl"
        client = FlakyTTS()
        synthesize_speech(src, out_manifest, tmp_path / "audio", client, VOICES)
        first_calls = len(client.calls)
        (tmp_path / "audio" / "u3.wav").unlink()
        result = synthesize_speech(
            src, out_manifest, tmp_path / "audio", client, VOICES
        )
        assert result.synthesized == 1 and result.skipped == 5
        assert len(client.calls) == first_calls + 1  # only the missing file

    def test_transient_failures_retried(self, tmp_path):
        src = manifest(tmp_path, n=3)
        client = FlakyTTS({"token0 token1": 2})
        result = synthesize_speech(
            src,
            tmp_path / "synth.jsonl",
            tmp_path / "audio",
            client,
            VOICES,
            max_attempts=3,
            backoff_s=0.0,
        )
        assert result.synthesized == 3 and result.failed == 0
        assert (tmp_path / "failures.txt").read_text() == ""

    def test_persistent_failure_recorded_run_continues(self, tmp_path):
        src = manifest(tmp_path, n=4)
        client = FlakyTTS({"token2 token3": 99})
        result = synthesize_speech(
            src,
            tmp_path / "synth.jsonl",
            tmp_path / "audio",
            client,
            VOICES,
            max_attempts=2,
            backoff_s=0.0,
        )
        assert result.synthesized == 3 and result.failed == 1
        failures = (tmp_path / "failures.txt").read_text().splitlines()
        assert len(failures) == 1
        utt_id, message = failures[0].split("\t", 1)
        assert utt_id == "u2"
        assert "hiccup" in message
        # the failed utterance is absent from the rewritten manifest
        assert [r["id"] for r in read_manifest(tmp_path / "synth.jsonl")] == [
            "u0",
            "u1",
            "u3",
        ]

    def test_parallel_run_matches_serial(self, tmp_path):
        src = manifest(tmp_path)
        serial, parallel = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
        synthesize_speech(src, serial, tmp_path / "a1", SineSpeechTTS(), VOICES, seed=5)
        synthesize_speech(
            src, parallel, tmp_path / "a2", SineSpeechTTS(), VOICES, seed=5, parallelism=4
        )
        assert serial.read_text() == parallel.read_text()
        for i in range(6):
            assert (tmp_path / "a1" / f"u{i}.wav").read_bytes() == (
                tmp_path / "a2" / f"u{i}.wav"
            ).read_bytes()

    def test_linguistic_stats_preserved(self, tmp_path):
        rows = [
            {"id": "u0", "transcript": "look at the doggie", "register": "cds"},
            {"id": "u1", "transcript": "the meeting ran long", "register": "ads"},
        ]
        src = tmp_path / "m.jsonl"
        write_manifest(rows, src)
        out = tmp_path / "synth.jsonl"
        synthesize_speech(src, out, tmp_path / "audio", SineSpeechTTS(), VOICES)
        records = read_manifest(out)
        # transcripts and metadata ride along untouched; only audio fields change
        for before, after in zip(rows, records):
            assert after["transcript"] == before["transcript"]
            assert after["register"] == before["register"]
            assert after["audio_path"].endswith(".wav")
            assert after["duration_s"] > 0
