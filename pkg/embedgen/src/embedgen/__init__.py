"""embedgen: sentence-embedding export and batch speech synthesis.

Produces the two inputs the speechground toolkit consumes — SEMB
embedding files and WAV audio with an updated JSONL manifest — speaking
only the on-disk interchange formats.
"""

from .embed import EmbedResult, HashEmbedder, ModelUnavailableError, embed_transcripts
from .manifest import ManifestError, read_manifest, write_manifest
from .semb import (
    EmbeddingFileError,
    EmbeddingHeader,
    read_embedding_file,
    write_embedding_file,
)
from .tts import (
    SineSpeechTTS,
    SynthesisResult,
    TTSError,
    VoiceSpec,
    assign_voices,
    synthesize_speech,
)
from .wav import write_wav

__version__ = "0.1.0"

__all__ = [
    "EmbedResult",
    "EmbeddingFileError",
    "EmbeddingHeader",
    "HashEmbedder",
    "ManifestError",
    "ModelUnavailableError",
    "SineSpeechTTS",
    "SynthesisResult",
    "TTSError",
    "VoiceSpec",
    "assign_voices",
    "embed_transcripts",
    "read_embedding_file",
    "read_manifest",
    "synthesize_speech",
    "write_embedding_file",
    "write_manifest",
    "write_wav",
]
