"""Command-line entry point orchestrating the experiment lifecycle.

Configuration is a plain-text file of flat dotted keys (``train.batch_size=32``),
overridable on the command line with ``--key=value`` flags. All randomness
flows from explicit seeds in the config; every subcommand writes its
artifacts under ``paths.out_dir`` and is idempotent given identical config
and seeds. Exit codes: 0 success, 1 runtime/validation failure, 2 usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import corpus, embeddings, features, retrieval, training
from .corpus import SplitSpec
from .encoder import EncoderConfig, SpeechEncoder, load_checkpoint
from .features import MfccConfig
from .training import TrainConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "paths.manifest": "",
    "paths.audio_root": "",
    "paths.feature_cache": "features",
    "paths.embeddings": "",
    "paths.out_dir": "out",
    "corpus.keep_role": "caregiver",
    "corpus.balance_seed": "17",
    "corpus.split_seed": "29",
    "corpus.n_validation": "1000",
    "corpus.n_test": "1000",
    "seeds": "1,2,3",
}


def _dataclass_defaults(prefix, cls):
    out = {}
    for f in dataclasses.fields(cls):
        out[f"{prefix}.{f.name}"] = str(f.default)
    return out


_DEFAULTS.update(_dataclass_defaults("mfcc", MfccConfig))
_DEFAULTS.update(_dataclass_defaults("encoder", EncoderConfig))
_DEFAULTS.update(_dataclass_defaults("train", TrainConfig))


def _coerce(value, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    return type(default)(value)


class ExperimentConfig:
    """Flat key=value configuration with typed dataclass views."""

    def __init__(self, values=None):
        self.values = dict(_DEFAULTS)
        if values:
            for key, val in values.items():
                if key not in self.values:
                    raise ConfigError(f"unknown config key {key!r}")
                self.values[key] = val

    @classmethod
    def load(cls, path, overrides=()):
        values = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{lineno}: expected key=value")
                    key, _, val = line.partition("=")
                    values[key.strip()] = val.strip()
        for key, val in overrides:
            values[key] = val
        return cls(values)

    def _section(self, prefix, cls):
        kwargs = {}
        for f in dataclasses.fields(cls):
            raw = self.values[f"{prefix}.{f.name}"]
            try:
                kwargs[f.name] = _coerce(raw, f.default)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{prefix}.{f.name}: {exc}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{prefix}: {exc}") from None

    def mfcc_config(self) -> MfccConfig:
        return self._section("mfcc", MfccConfig)

    def encoder_config(self, init_seed=None) -> EncoderConfig:
        cfg = self._section("encoder", EncoderConfig)
        if init_seed is not None:
            cfg = dataclasses.replace(cfg, init_seed=init_seed)
        return cfg

    def train_config(self, seed=None) -> TrainConfig:
        cfg = self._section("train", TrainConfig)
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        return cfg

    def seeds(self) -> list[int]:
        try:
            return [int(s) for s in self.values["seeds"].split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"seeds: expected comma-separated integers") from None

    def path(self, key) -> Path:
        return Path(self.values[f"paths.{key}"])

    def out_dir(self) -> Path:
        return Path(self.values["paths.out_dir"])


def _split_stem(cfg, register):
    return cfg.out_dir() / "splits" / register


def _run_dir(cfg, register, seed):
    return cfg.out_dir() / "runs" / register / f"seed{seed}"


def _load_split(cfg, register, split):
    path = Path(f"{_split_stem(cfg, register)}.{split}")
    if not path.exists():
        raise FileNotFoundError(f"missing split manifest {path}; run `ingest` first")
    return corpus.parse_manifest(path)


def _registers_present(cfg):
    present = []
    for register in corpus.REGISTERS:
        if Path(f"{_split_stem(cfg, register)}.train").exists():
            present.append(register)
    if not present:
        raise FileNotFoundError("no split manifests found; run `ingest` first")
    return present


def _feature_path(cfg, utt_id):
    return cfg.path("feature_cache") / f"{utt_id}.mfcc"


def _load_features(cfg, utterances):
    mfcc_cfg = cfg.mfcc_config()
    feats = {}
    missing = []
    for utt in utterances:
        path = _feature_path(cfg, utt.id)
        if not path.exists():
            missing.append(utt.id)
            continue
        feats[utt.id] = features.read_feature_cache(path, mfcc_cfg.digest()).frames
    if missing:
        raise FileNotFoundError(
            f"missing feature caches for {len(missing)} utterances "
            f"(e.g. {missing[:5]}); run `featurize` first"
        )
    return feats


def _load_targets(cfg, utterances=None):
    path = cfg.path("embeddings")
    dim, _ = embeddings.read_header(path)
    enc_dim = cfg.encoder_config().embed_dim
    if dim != enc_dim:
        raise ConfigError(
            f"embedding file dimension {dim} does not match encoder.embed_dim {enc_dim}"
        )
    vectors = embeddings.read_embeddings(path)
    if utterances is not None:
        missing = [u.id for u in utterances if u.id not in vectors]
        if missing:
            raise ConfigError(
                f"embedding file lacks {len(missing)} manifest ids (e.g. {missing[:5]})"
            )
    return vectors


# ---------------------------------------------------------------- subcommands


def cmd_ingest(cfg, dry_run):
    utterances = corpus.parse_manifest(cfg.path("manifest"))
    if dry_run:
        return 0
    kept = corpus.drop_unusable(
        corpus.filter_utterances(utterances, cfg.values["corpus.keep_role"])
    )
    by_register = {
        reg: [u for u in kept if u.register == reg] for reg in corpus.REGISTERS
    }
    cds, ads = by_register["cds"], by_register["ads"]
    if cds and ads:
        cds, ads = corpus.balance_registers(
            cds, ads, int(cfg.values["corpus.balance_seed"])
        )
        by_register = {"cds": cds, "ads": ads}
    (cfg.out_dir() / "splits").mkdir(parents=True, exist_ok=True)
    spec = SplitSpec(
        seed=int(cfg.values["corpus.split_seed"]),
        n_validation=int(cfg.values["corpus.n_validation"]),
        n_test=int(cfg.values["corpus.n_test"]),
    )
    for register, utts in by_register.items():
        if not utts:
            continue
        splits = corpus.split_corpus(utts, spec)
        paths = corpus.write_splits(splits, str(_split_stem(cfg, register)))
        print(
            f"{register}: train={len(splits['train'])} "
            f"val={len(splits['validation'])} test={len(splits['test'])} -> {paths['train']}"
        )
    return 0


def cmd_stats(cfg, dry_run):
    utterances = corpus.parse_manifest(cfg.path("manifest"))
    if dry_run:
        return 0
    stats = {}
    for register in corpus.REGISTERS:
        members = [u for u in utterances if u.register == register]
        if members:
            stats[register] = corpus.compute_stats(members)
    table = corpus.stats_table(stats)
    print(table)
    cfg.out_dir().mkdir(parents=True, exist_ok=True)
    (cfg.out_dir() / "stats.txt").write_text(table + "\n")
    return 0


def cmd_featurize(cfg, dry_run):
    mfcc_cfg = cfg.mfcc_config()
    utterances = []
    for register in _registers_present(cfg):
        for split in ("train", "val", "test"):
            utterances.extend(_load_split(cfg, register, split))
    audio_root = cfg.path("audio_root")
    for utt in utterances:
        path = audio_root / utt.audio_path
        if not path.exists():
            raise FileNotFoundError(f"audio file not found: {path}")
    if dry_run:
        return 0
    cache_dir = cfg.path("feature_cache")
    cache_dir.mkdir(parents=True, exist_ok=True)
    done = 0
    for utt in utterances:
        out_path = _feature_path(cfg, utt.id)
        if out_path.exists():
            try:
                features.read_feature_cache(out_path, mfcc_cfg.digest())
                continue
            except features.CacheError:
                pass
        audio = features.load_audio(audio_root / utt.audio_path)
        mat = features.mfcc(audio, mfcc_cfg, utterance_id=utt.id)
        features.write_feature_cache(mat, out_path)
        done += 1
    print(f"featurized {done} utterances into {cache_dir}")
    return 0


def cmd_train(cfg, dry_run):
    registers = _registers_present(cfg)
    for register in registers:
        train_utts = _load_split(cfg, register, "train")
        val_utts = _load_split(cfg, register, "val")
        targets = _load_targets(cfg, train_utts + val_utts)
        if dry_run:
            continue
        feats = _load_features(cfg, train_utts + val_utts)
        for seed in cfg.seeds():
            run_dir = _run_dir(cfg, register, seed)
            encoder = SpeechEncoder(cfg.encoder_config(init_seed=seed))
            result = training.fit(
                encoder,
                [u.id for u in train_utts],
                [u.id for u in val_utts],
                feats,
                targets,
                cfg.train_config(seed=seed),
                run_dir,
            )
            print(
                f"{register} seed {seed}: best epoch {result.best_epoch} "
                f"(val recall@1 {result.best_val_recall1:.3f}) -> {result.best_checkpoint}"
            )
    return 0


def cmd_evaluate(cfg, dry_run):
    reports = []
    for register in _registers_present(cfg):
        test_utts = _load_split(cfg, register, "test")
        targets = _load_targets(cfg, test_utts)
        if dry_run:
            continue
        feats = _load_features(cfg, test_utts)
        per_seed = []
        for seed in cfg.seeds():
            ckpt = _run_dir(cfg, register, seed) / "best.sgck"
            if not ckpt.exists():
                raise FileNotFoundError(f"missing checkpoint {ckpt}; run `train` first")
            encoder, _, _ = load_checkpoint(ckpt)
            per_seed.append(
                retrieval.evaluate(
                    encoder, [u.id for u in test_utts], feats, targets, test_set=register
                )
            )
        reports.extend(per_seed)
        reports.append(
            dataclasses.replace(
                retrieval.mean_report(per_seed), test_set=f"{register}-mean"
            )
        )
    if dry_run:
        return 0
    out = cfg.out_dir() / "evaluation.csv"
    retrieval.write_reports_csv(reports, out)
    for rep in reports:
        print(rep.csv_row())
    print(f"wrote {out}")
    return 0


def cmd_cross_eval(cfg, dry_run):
    registers = _registers_present(cfg)
    if set(registers) != {"cds", "ads"}:
        raise ConfigError("cross-eval needs both cds and ads splits")
    cds_test = _load_split(cfg, "cds", "test")
    ads_test = _load_split(cfg, "ads", "test")
    targets = _load_targets(cfg, cds_test + ads_test)
    if dry_run:
        return 0
    feats = _load_features(cfg, cds_test + ads_test)
    encoders = {}
    for register in registers:
        encoders[register] = []
        for seed in cfg.seeds():
            ckpt = _run_dir(cfg, register, seed) / "best.sgck"
            if not ckpt.exists():
                raise FileNotFoundError(f"missing checkpoint {ckpt}; run `train` first")
            encoders[register].append(load_checkpoint(ckpt)[0])
    matrix = retrieval.evaluate_cross_register(
        encoders, [u.id for u in cds_test], [u.id for u in ads_test], feats, targets
    )
    out_csv = cfg.out_dir() / "cross_eval.csv"
    with open(out_csv, "w") as fh:
        fh.write("model_register,seed," + retrieval.REPORT_HEADER + "\n")
        for (model_reg, test_set), reps in sorted(matrix.per_seed.items()):
            for i, rep in enumerate(reps):
                fh.write(f"{model_reg},{cfg.seeds()[i]},{rep.csv_row()}\n")
            fh.write(f"{model_reg},mean,{matrix.means[(model_reg, test_set)].csv_row()}\n")
    table = matrix.table()
    (cfg.out_dir() / "cross_eval.txt").write_text(table + "\n")
    print(table)
    print(f"wrote {out_csv}")
    return 0


def cmd_trajectory(cfg, dry_run):
    logs = {}
    for register in _registers_present(cfg):
        paths = [
            _run_dir(cfg, register, seed) / "trajectory.csv" for seed in cfg.seeds()
        ]
        missing = [p for p in paths if not p.exists()]
        if missing:
            raise FileNotFoundError(f"missing trajectory logs: {missing}")
        logs[register] = paths
    if dry_run:
        return 0
    out_csv = cfg.out_dir() / "trajectory_mean.csv"
    out_svg = cfg.out_dir() / "trajectory.svg"
    retrieval.trajectory_report(logs, out_csv, out_svg)
    print(f"wrote {out_csv} and {out_svg}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "cross-eval": cmd_cross_eval,
    "trajectory": cmd_trajectory,
}

_OVERRIDE_RE = re.compile(r"^--([A-Za-z_][\w.]*)=(.*)$")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="speechground",
        description="Speech-to-semantic-embedding grounding experiments.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="validate the configuration and input file headers, then exit",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    overrides = []
    for extra in extras:
        match = _OVERRIDE_RE.match(extra)
        if not match:
            parser.error(f"unrecognized argument {extra!r}")
        overrides.append((match.group(1), match.group(2)))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = ExperimentConfig.load(args.config, overrides)
        # fail fast on malformed sections even if the subcommand skips them
        cfg.mfcc_config(), cfg.encoder_config(), cfg.train_config(), cfg.seeds()
        return _COMMANDS[args.command](cfg, args.dry_run)
    except BrokenPipeError:
        return 1
    except (
        ConfigError,
        ValueError,
        KeyError,
        OSError,
        corpus.ManifestError,
        features.AudioError,
        features.CacheError,
        embeddings.EmbeddingFileError,
    ) as exc:
        print(f"speechground {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
