"""Audio and manifest ingestion.

Canonical audio format downstream of this module: mono float64 samples in
[-1, 1] at 16 kHz. WAV files must be RIFF PCM 16-bit; stereo is averaged
to mono. Dataset manifests are CSV files with header ``path,label,split``.
"""

import csv
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

TARGET_RATE = 16000
MIN_SOURCE_RATE = 8000

VALID_SPLITS = ("train", "test")


class ManifestError(ValueError):
    """Raised for malformed or inconsistent dataset manifests."""


class AudioFormatError(ValueError):
    """Raised for WAV files that are not decodable as RIFF PCM 16-bit."""


@dataclass
class AudioClip:
    """A decoded audio recording.

    samples are amplitudes in [-1, 1]; sample_rate is in Hz.
    """

    samples: np.ndarray
    sample_rate: int
    source_path: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        if np.max(np.abs(self.samples)) > 1.0 + 1e-12:
            raise ValueError("samples exceed the [-1, 1] amplitude range")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class DatasetManifest:
    """Ordered list of (path, label, split) rows."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if not entry.label:
                raise ManifestError(f"entry {entry.path!r} has an empty label")
            if entry.split not in VALID_SPLITS:
                raise ManifestError(
                    f"entry {entry.path!r} has unknown split {entry.split!r}"
                )
            if entry.path in seen:
                raise ManifestError(f"duplicate path {entry.path!r} in manifest")
            seen.add(entry.path)

    def split_entries(self, split):
        if split not in VALID_SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def labels(self):
        return sorted({e.label for e in self.entries})

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, DatasetManifest) and self.entries == other.entries


def load_manifest(path):
    """Parse a manifest CSV with header ``path,label,split``.

    Row order is preserved. Raises ManifestError naming the offending row
    for malformed rows, unknown split tokens, or duplicate paths.
    """
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest file") from None
        if [c.strip() for c in header] != ["path", "label", "split"]:
            raise ManifestError(
                f"{path}: expected header 'path,label,split', got {header!r}"
            )
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(
                    f"{path}: row {row_number} has {len(row)} columns, expected 3"
                )
            entry_path, label, split = (c.strip() for c in row)
            if split not in VALID_SPLITS:
                raise ManifestError(
                    f"{path}: row {row_number}: unknown split {split!r}"
                )
            if not label:
                raise ManifestError(f"{path}: row {row_number}: empty label")
            entries.append(ManifestEntry(entry_path, label, split))
    try:
        return DatasetManifest(entries)
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def write_manifest(manifest, path):
    """Write a manifest as CSV (UTF-8, LF line endings); inverse of load_manifest."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        for entry in manifest.entries:
            writer.writerow([entry.path, entry.label, entry.split])


def decode_wav(path):
    """Decode a RIFF PCM 16-bit WAV file into an AudioClip.

    Integer samples are scaled to [-1, 1] by division by 32768; stereo
    channels are averaged to mono.
    """
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getcomptype() != "NONE":
                raise AudioFormatError(
                    f"{path}: compressed WAV ({wav.getcomptype()}) is not supported"
                )
            sample_width = wav.getsampwidth()
            if sample_width != 2:
                raise AudioFormatError(
                    f"{path}: expected PCM 16-bit, got {8 * sample_width}-bit"
                )
            n_channels = wav.getnchannels()
            if n_channels not in (1, 2):
                raise AudioFormatError(
                    f"{path}: expected mono or stereo, got {n_channels} channels"
                )
            n_frames = wav.getnframes()
            if n_frames == 0:
                raise AudioFormatError(f"{path}: zero-length data chunk")
            raw = wav.readframes(n_frames)
            if len(raw) < n_frames * n_channels * 2:
                raise AudioFormatError(f"{path}: truncated data chunk")
            rate = wav.getframerate()
    except (wave.Error, EOFError, struct.error) as exc:
        raise AudioFormatError(f"{path}: {exc}") from None

    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels == 2:
        samples = 0.5 * (samples[0::2] + samples[1::2])
    return AudioClip(samples=samples, sample_rate=rate, source_path=str(path))


def resample_to_16k(clip):
    """Resample a clip to 16 kHz by linear interpolation.

    Output length is round(n_in * 16000 / rate_in); a clip already at
    16 kHz is returned unchanged. Rates below 8 kHz are rejected as too
    lossy for the mel band used downstream.
    """
    if clip.sample_rate < MIN_SOURCE_RATE:
        raise ValueError(
            f"sample rate {clip.sample_rate} Hz below the {MIN_SOURCE_RATE} Hz minimum"
        )
    if clip.sample_rate == TARGET_RATE:
        return clip
    n_in = clip.samples.size
    n_out = int(round(n_in * TARGET_RATE / clip.sample_rate))
    positions = np.arange(n_out) * (clip.sample_rate / TARGET_RATE)
    resampled = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(
        samples=resampled, sample_rate=TARGET_RATE, source_path=clip.source_path
    )
