import numpy as np
import pytest

from speechground import embeddings
from speechground.cli import ExperimentConfig, ConfigError, main

from helpers import manifest_record, sine_speech, write_manifest_lines, write_wav


def build_corpus(root, n_per_register=14, embed_dim=16, seed=0):
    """Sine-speech corpus with per-token target embeddings."""
    gen = np.random.default_rng(seed)
    audio_dir = root / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    vocab = {
        "cds": [f"kid{i}" for i in range(8)],
        "ads": [f"grown{i}" for i in range(8)],
    }
    token_vecs = {
        tok: gen.standard_normal(embed_dim)
        for toks in vocab.values()
        for tok in toks
    }
    records, vectors = [], {}
    for register, toks in vocab.items():
        for i in range(n_per_register):
            ident = f"{register}{i}"
            tokens = [toks[int(k)] for k in gen.integers(0, len(toks), size=3)]
            samples = sine_speech(tokens)
            write_wav(audio_dir / f"{ident}.wav", samples)
            records.append(
                manifest_record(
                    ident,
                    " ".join(tokens),
                    register=register,
                    duration=len(samples) / 16000,
                )
            )
            v = np.sum([token_vecs[t] for t in tokens], axis=0)
            vectors[ident] = (v / np.linalg.norm(v)).astype(np.float32)
    manifest = root / "manifest.jsonl"
    write_manifest_lines(manifest, records)
    embeddings.write_embeddings(vectors, root / "targets.semb", dim=embed_dim)
    return manifest


def write_config(root, manifest, **extra):
    values = {
        "paths.manifest": manifest,
        "paths.audio_root": root / "audio",
        "paths.feature_cache": root / "features",
        "paths.embeddings": root / "targets.semb",
        "paths.out_dir": root / "out",
        "corpus.n_validation": 2,
        "corpus.n_test": 2,
        "encoder.conv_channels": 8,
        "encoder.gru_hidden": 4,
        "encoder.gru_layers": 2,
        "encoder.embed_dim": 16,
        "encoder.attention_dim": 4,
        "train.epochs": 2,
        "train.batch_size": 8,
        "seeds": "1",
    }
    values.update(extra)
    path = root / "config.txt"
    path.write_text("".join(f"{k}={v}\n" for k, v in values.items()))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, capsys_disabled=None):
    """Run the full subcommand lifecycle once; tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    manifest = build_corpus(root)
    config = write_config(root, manifest)
    for command in ("ingest", "featurize", "train", "evaluate", "cross-eval", "trajectory"):
        assert main([command, "--config", str(config)]) == 0, command
    return root, config


class TestLifecycle:
    def test_split_manifests_written(self, pipeline):
        root, _ = pipeline
        for register in ("cds", "ads"):
            for suffix in ("train", "val", "test"):
                path = root / "out" / "splits" / f"{register}.{suffix}"
                assert path.exists()
        train = (root / "out" / "splits" / "cds.train").read_text().splitlines()
        assert len(train) == 10  # 14 - 2 val - 2 test

    def test_feature_caches_cover_manifest(self, pipeline):
        root, _ = pipeline
        assert len(list((root / "features").glob("*.mfcc"))) == 28

    def test_training_artifacts(self, pipeline):
        root, _ = pipeline
        run = root / "out" / "runs" / "cds" / "seed1"
        assert (run / "best.sgck").exists()
        lines = (run / "trajectory.csv").read_text().splitlines()
        assert len(lines) == 3  # header + 2 epochs

    def test_evaluation_report(self, pipeline):
        root, _ = pipeline
        rows = (root / "out" / "evaluation.csv").read_text().splitlines()
        assert rows[0] == "test_set,n,recall1,recall5,recall10,median_rank"
        assert len(rows) > 1

    def test_cross_eval_matrix(self, pipeline):
        root, _ = pipeline
        text = (root / "out" / "cross_eval.csv").read_text()
        # 2 models x 3 test sets x (1 seed + mean)
        assert len(text.splitlines()) == 1 + 12
        assert "combined" in text

    def test_trajectory_outputs(self, pipeline):
        root, _ = pipeline
        assert (root / "out" / "trajectory_mean.csv").exists()
        assert (root / "out" / "trajectory.svg").read_text().startswith("<svg")

    def test_idempotent_rerun(self, pipeline):
        root, config = pipeline
        before = (root / "out" / "evaluation.csv").read_bytes()
        assert main(["evaluate", "--config", str(config)]) == 0
        assert (root / "out" / "evaluation.csv").read_bytes() == before


class TestStats:
    def test_hand_verifiable_table(self, tmp_path, capsys):
        manifest = tmp_path / "m.jsonl"
        write_manifest_lines(
            manifest,
            [
                manifest_record("c1", "the cat sat", register="cds", duration=1.5),
                manifest_record("c2", "the cat", register="cds", duration=1.0),
                manifest_record("a1", "meetings are long", register="ads", duration=2.0),
            ],
        )
        assert main(["stats", f"--paths.manifest={manifest}",
                     f"--paths.out_dir={tmp_path / 'out'}"]) == 0
        out = capsys.readouterr().out
        # CDS: vocab 3, 5 words, 2.50 words/utterance, 1.25 s, 2.00 w/s
        assert "CDS" in out and "ADS" in out
        lines = {line.split()[0]: line for line in out.splitlines() if line}
        assert "2.50" in lines["Words"] or "2.50" in out
        assert "2.00" in out


class TestValidation:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["stats", "--definitely-not-a-flag"])
        assert exc.value.code == 2

    def test_zero_epochs_is_config_error(self, tmp_path, capsys):
        manifest = tmp_path / "m.jsonl"
        write_manifest_lines(manifest, [manifest_record("u1", "hi")])
        code = main(["train", f"--paths.manifest={manifest}", "--train.epochs=0"])
        assert code == 1
        assert "epochs" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig({"nonsense.key": "1"})

    def test_missing_manifest_exits_1(self, tmp_path):
        assert main(["ingest", f"--paths.manifest={tmp_path / 'nope.jsonl'}"]) == 1

    def test_dry_run_validates_without_artifacts(self, tmp_path):
        manifest = build_corpus(tmp_path, n_per_register=4)
        config = write_config(tmp_path, manifest, **{"corpus.n_validation": 1, "corpus.n_test": 1})
        assert main(["stats", "--config", str(config), "--dry-run"]) == 0
        assert not (tmp_path / "out").exists()

    def test_dry_run_catches_dim_mismatch(self, tmp_path):
        manifest = build_corpus(tmp_path, n_per_register=4)
        config = write_config(
            tmp_path,
            manifest,
            **{"corpus.n_validation": 1, "corpus.n_test": 1, "encoder.embed_dim": 32},
        )
        assert main(["ingest", "--config", str(config)]) == 0
        assert main(["train", "--config", str(config), "--dry-run"]) == 1

    def test_dry_run_accepts_valid_inputs(self, tmp_path):
        manifest = build_corpus(tmp_path, n_per_register=4)
        config = write_config(tmp_path, manifest, **{"corpus.n_validation": 1, "corpus.n_test": 1})
        assert main(["ingest", "--config", str(config)]) == 0
        assert main(["train", "--config", str(config), "--dry-run"]) == 0
        assert not (tmp_path / "out" / "runs").exists()
