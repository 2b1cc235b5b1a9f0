"""embedgen command line: embed transcripts, synthesize speech audio."""

from __future__ import annotations

import argparse
import sys

from .embed import ModelUnavailableError, embed_transcripts
from .manifest import ManifestError
from .semb import EmbeddingFileError
from .tts import SineSpeechTTS, synthesize_speech


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embedgen",
        description="Produce sentence embeddings and synthetic speech for "
        "speechground manifests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="write a SEMB embedding file")
    embed.add_argument("manifest")
    embed.add_argument("--model", default="hash-sim-768")
    embed.add_argument("--out", required=True)
    embed.add_argument("--report", default=None)

    synth = sub.add_parser("synthesize", help="render WAV audio per utterance")
    synth.add_argument("manifest")
    synth.add_argument("--out-manifest", required=True)
    synth.add_argument("--audio-dir", required=True)
    synth.add_argument("--voices", default="v1,v2,v3,v4,v5,v6",
                       help="comma-separated voice pool")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--parallelism", type=int, default=1)
    synth.add_argument("--provider", choices=["sine"], default="sine",
                       help="only the offline sine provider ships built in")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embed":
            result = embed_transcripts(args.manifest, args.model, args.out, args.report)
            print(
                f"wrote {args.out}: dim={result.header.dim} count={result.header.count}"
                + (
                    f" ({len(result.empty_transcript_ids)} empty transcripts zeroed)"
                    if result.empty_transcript_ids
                    else ""
                )
            )
        else:
            result = synthesize_speech(
                args.manifest,
                args.out_manifest,
                args.audio_dir,
                client=SineSpeechTTS(),
                voice_pool=args.voices.split(","),
                seed=args.seed,
                parallelism=args.parallelism,
            )
            print(
                f"synthesized {result.synthesized}, skipped {result.skipped}, "
                f"failed {result.failed} -> {result.manifest_path}"
            )
            if result.failed:
                print(f"see {result.failures_path}", file=sys.stderr)
                return 1
        return 0
    except (ManifestError, EmbeddingFileError, ModelUnavailableError, OSError, ValueError) as exc:
        print(f"embedgen {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
