"""Synthetic desk-scale datasets for end-to-end pipeline verification.

Each synthetic sound class is a random planted basis; recordings are
column-concatenations of class-generated frames, with per-class frame
counts drawn from the recording's city mixing distribution. Data is
emitted at the feature-matrix level (the pipeline's feature-injection
input) so numerical acceptance stays independent of audio decoding.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import archive as ar
from .dataset import DatasetManifest, ManifestEntry, write_manifest
from ._seeds import derive_seed


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 6
    k_true: int = 4
    d: int = 12
    n_cities: int = 4
    city_mixing: tuple = None  # rows (per city) over classes, each summing to 1
    clip_frames: int = 100
    class_frames: int = 300
    train_per_city: int = 40
    test_per_city: int = 40
    noise_sigma: float = 0.0
    loudness_jitter: float = 1.0  # per-frame scale drawn log-uniform in [1/j, j]
    seed: int = 0

    def validate(self):
        if min(self.n_classes, self.k_true, self.d, self.n_cities) < 1:
            raise ValueError("counts must be positive")
        if self.k_true > self.d:
            raise ValueError("k_true must not exceed d")
        if min(self.clip_frames, self.class_frames) < self.k_true:
            raise ValueError("frame counts must be at least k_true")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.loudness_jitter < 1:
            raise ValueError("loudness_jitter must be at least 1")
        self.mixing()

    def class_names(self):
        return [f"class{l}" for l in range(self.n_classes)]

    def city_names(self):
        return [f"city{c}" for c in range(self.n_cities)]

    def mixing(self):
        """Per-city distribution over classes as an (n_cities, n_classes) array."""
        if self.city_mixing is not None:
            rows = np.asarray(self.city_mixing, dtype=np.float64)
            if rows.shape != (self.n_cities, self.n_classes):
                raise ValueError(
                    f"city_mixing must be {self.n_cities} x {self.n_classes}"
                )
            if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("mixing rows must be nonnegative and sum to 1")
            return rows / rows.sum(axis=1, keepdims=True)
        # Default: each city concentrates on a window of classes, with a
        # small floor everywhere so supports partially overlap.
        rows = np.full((self.n_cities, self.n_classes), 0.05)
        peak = np.array([0.5, 0.3, 0.2])[: self.n_classes]
        budget = 1.0 - 0.05 * self.n_classes
        for c in range(self.n_cities):
            start = int(round(c * self.n_classes / self.n_cities))
            for j, w in enumerate(peak / peak.sum()):
                rows[c, (start + j) % self.n_classes] += budget * w
        return rows / rows.sum(axis=1, keepdims=True)


def class_bases(spec):
    """Planted basis per class: standard-normal d x k_true matrices."""
    bases = {}
    for name in spec.class_names():
        rng = np.random.default_rng(derive_seed(spec.seed, "synth-basis", name))
        bases[name] = rng.normal(size=(spec.d, spec.k_true))
    return bases


def _class_frames(basis, n_frames, noise_sigma, loudness_jitter, rng):
    """Frames of one class: scaled noisy mixtures of the planted basis.

    The per-frame loudness scale multiplies signal and noise alike, so a
    jittered noise-free matrix still factorizes exactly (the scale folds
    into the nonnegative weights).
    """
    W = rng.uniform(size=(n_frames, basis.shape[1]))
    log_j = np.log(loudness_jitter)
    scales = np.exp(rng.uniform(-log_j, log_j, size=n_frames))
    X = basis @ W.T
    if noise_sigma > 0:
        X = X + noise_sigma * rng.normal(size=X.shape)
    return X * scales


def gen_class_data(spec):
    """Pooled training features per sound class: X = M* W*^T (+ noise)."""
    spec.validate()
    bases = class_bases(spec)
    data = {}
    for name in spec.class_names():
        rng = np.random.default_rng(derive_seed(spec.seed, "synth-class", name))
        data[name] = _class_frames(bases[name], spec.class_frames,
                                   spec.noise_sigma, spec.loudness_jitter, rng)
    return data


def gen_city_dataset(spec):
    """Synthetic city recordings.

    Returns (entries, features, mixing): manifest-style entries in
    deterministic order, a dict of recording id -> feature matrix, and
    the mixing matrix used. Each recording draws per-class frame counts
    from its city's mixing distribution and concatenates class-generated
    frames in class order. The split is a per-city half/half partition.
    """
    spec.validate()
    bases = class_bases(spec)
    mixing = spec.mixing()
    class_names = spec.class_names()
    entries = []
    features = {}
    for c, city in enumerate(spec.city_names()):
        for split, count in (("train", spec.train_per_city),
                             ("test", spec.test_per_city)):
            for i in range(count):
                rec_id = f"{city}_{split}{i:03d}"
                rng = np.random.default_rng(
                    derive_seed(spec.seed, "synth-rec", rec_id)
                )
                counts = rng.multinomial(spec.clip_frames, mixing[c])
                parts = [
                    _class_frames(bases[class_names[l]], counts[l],
                                  spec.noise_sigma, spec.loudness_jitter, rng)
                    for l in range(spec.n_classes) if counts[l] > 0
                ]
                features[rec_id] = np.hstack(parts)
                entries.append((rec_id, city, split))
    return entries, features, mixing


def write_dataset(spec, out_dir):
    """Materialize the synthetic dataset in the on-disk pipeline formats.

    Writes per-class and per-recording feature archives, the two CSV
    manifests (paths relative to the manifest location), and a metadata
    document echoing the generating spec. Returns the manifest paths.
    """
    spec.validate()
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "classes"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "recordings"), exist_ok=True)

    class_entries = []
    for name, X in gen_class_data(spec).items():
        rel = os.path.join("classes", f"{name}.json")
        ar.save_archive(ar.clip_features_archive(X), os.path.join(out_dir, rel))
        class_entries.append(ManifestEntry(rel, name, "train"))
    class_manifest = os.path.join(out_dir, "classes.csv")
    write_manifest(DatasetManifest(class_entries), class_manifest)

    entries, features, mixing = gen_city_dataset(spec)
    city_entries = []
    for rec_id, city, split in entries:
        rel = os.path.join("recordings", f"{rec_id}.json")
        ar.save_archive(
            ar.clip_features_archive(features[rec_id]), os.path.join(out_dir, rel)
        )
        city_entries.append(ManifestEntry(rel, city, split))
    city_manifest = os.path.join(out_dir, "cities.csv")
    write_manifest(DatasetManifest(city_entries), city_manifest)

    meta = {
        "n_classes": spec.n_classes,
        "k_true": spec.k_true,
        "d": spec.d,
        "n_cities": spec.n_cities,
        "clip_frames": spec.clip_frames,
        "class_frames": spec.class_frames,
        "train_per_city": spec.train_per_city,
        "test_per_city": spec.test_per_city,
        "noise_sigma": spec.noise_sigma,
        "loudness_jitter": spec.loudness_jitter,
        "seed": spec.seed,
        "mixing": [list(map(float, row)) for row in mixing],
    }
    with open(os.path.join(out_dir, "synth_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"class_manifest": class_manifest, "city_manifest": city_manifest}
