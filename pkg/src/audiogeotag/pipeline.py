"""End-to-end orchestration: train bases, featurize, train and evaluate.

Stages communicate only through archives under the configured output
directory, so each subcommand is resumable: an archive is reused when its
recorded config digest matches the current one and recomputed otherwise.
Digests cover the semantically relevant configuration plus the manifest
contents, never absolute paths, which keeps reports byte-reproducible
across working directories.

Nothing from the test split ever reaches a training step: bases come from
the class manifest, GMMs and kernel bandwidths from the train split only,
and cross-validation folds are drawn from training labels.
"""

import hashlib
import json
import logging
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import archive as ar
from ._seeds import derive_seed
from .dataset import decode_wav, load_manifest, resample_to_16k
from .evaluate import build_report
from .features import extract_mfca
from .featurize import boaw_feature, h_feature, supervector_feature, v_feature
from .gmm import DiagonalGMM
from .kernels import (
    average_pairwise_gamma,
    cross_exp_chi2,
    cross_linear_kernel,
    exp_chi2_kernel,
    fuse_average,
    fuse_product,
    linear_kernel,
)
from .seminmf import infer_weights, learn_basis
from .svm import cross_validate_C, train_svm

logger = logging.getLogger(__name__)

BACKGROUND = "__background__"


def _parallel_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _safe_name(name):
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def _file_sha(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _digest(doc):
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def stage_digests(config):
    """Digest per stage; later stages fold in the digests of earlier ones."""
    sem = config.semantic_dict()
    basis = _digest({
        "classes_sha": _file_sha(config.sound_class_manifest),
        "input_kind": sem["input_kind"],
        "mfcc": sem["mfcc"],
        "factorization": sem["factorization"],
        "k": sem["k"],
        "seed": sem["seed"],
    })
    features = _digest({
        "basis": basis,
        "cities_sha": _file_sha(config.city_manifest),
        "featurizer": sem["featurizer"],
        "G": sem["G"],
        "em": sem["em"],
        "relevance": sem["relevance"],
    })
    evaluation = _digest({
        "features": features,
        "fusion": sem["fusion"],
        "cv": sem["cv"],
        "min_examples": sem["min_examples"],
    })
    return {"basis": basis, "features": features, "eval": evaluation}


def _paths(config):
    out = config.output_dir
    return {
        "basis_dir": os.path.join(out, "basis"),
        "gmm_dir": os.path.join(out, "gmm"),
        "kernel_dir": os.path.join(out, "kernels"),
        "svm_dir": os.path.join(out, "svm"),
        "table": os.path.join(out, "features", "table.json"),
        "report": os.path.join(out, "report.json"),
        "report_txt": os.path.join(out, "report.txt"),
    }


def _reusable(path, kind, digest):
    if not os.path.exists(path):
        return False
    try:
        archive = ar.load_archive(path)
    except (ar.ArchiveError, OSError):
        return False
    return archive.kind == kind and archive.payload.get("config_digest") == digest


def _resolve(manifest_path, entry_path):
    if os.path.isabs(entry_path):
        return entry_path
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), entry_path)


def load_recording_features(path, config):
    """Feature matrix for one recording: decode audio or inject features."""
    if config.input_kind == "features":
        return ar.clip_features_from_archive(ar.load_archive(path))
    clip = resample_to_16k(decode_wav(path))
    return extract_mfca(clip, config.mfcc)


# -- stage 1: per-class basis learning ------------------------------------

def cmd_train_basis(config):
    """Learn one basis archive per sound class; returns {class: path}."""
    config.validate()
    digests = stage_digests(config)
    paths = _paths(config)
    manifest = load_manifest(config.sound_class_manifest)
    by_class = {}
    for entry in manifest.entries:
        by_class.setdefault(entry.label, []).append(
            _resolve(config.sound_class_manifest, entry.path)
        )
    if not by_class:
        raise ValueError("sound class manifest lists no recordings")

    def build(class_name):
        target = os.path.join(paths["basis_dir"], f"{_safe_name(class_name)}.json")
        if _reusable(target, "basis", digests["basis"]):
            logger.info("train-basis %s: reusing archive", class_name)
            return class_name, target
        mats = []
        for rec_path in by_class[class_name]:
            try:
                mats.append(load_recording_features(rec_path, config))
            except (ValueError, OSError) as exc:
                logger.warning("train-basis %s: skipping %s (%s)",
                               class_name, rec_path, exc)
        if not mats:
            raise ValueError(f"class {class_name!r}: no decodable recordings")
        X = np.hstack(mats)
        opts = replace(
            config.factorization,
            seed=derive_seed(config.seed, "basis", class_name),
        )
        M, trace = learn_basis(X, config.k, opts)
        logger.info(
            "train-basis %s: objective %.6g -> %.6g over %d sweeps "
            "(relative %.3g)",
            class_name, trace[0], trace[-1], len(trace) - 1,
            trace[-1] / max(float(np.sum(X * X)), 1e-300),
        )
        ar.save_archive(
            ar.basis_archive(class_name, M, opts, digests["basis"]), target
        )
        return class_name, target

    results = _parallel_map(build, sorted(by_class), config.jobs)
    return dict(results)


# -- stage 2: per-recording featurization ---------------------------------

def _load_city_recordings(config):
    manifest = load_manifest(config.city_manifest)
    ids, labels, splits, skipped = [], {}, {}, []
    features = {}

    def load(entry):
        try:
            return entry, load_recording_features(
                _resolve(config.city_manifest, entry.path), config
            )
        except (ValueError, OSError) as exc:
            logger.warning("featurize: skipping %s (%s)", entry.path, exc)
            return entry, None

    for entry, X in _parallel_map(load, manifest.entries, config.jobs):
        if X is None:
            skipped.append(entry.path)
            continue
        ids.append(entry.path)
        labels[entry.path] = entry.label
        splits[entry.path] = entry.split
        features[entry.path] = X
    if not ids:
        raise ValueError("no decodable recordings in the city manifest")
    return ids, labels, splits, skipped, features


def _load_bases(config, basis_paths=None):
    if basis_paths is None:
        basis_paths = cmd_train_basis(config)
    bases = {}
    for class_name, path in basis_paths.items():
        archived_name, M = ar.basis_from_archive(ar.load_archive(path))
        if archived_name != class_name:
            raise ValueError(
                f"basis archive {path} holds class {archived_name!r}, "
                f"expected {class_name!r}"
            )
        bases[class_name] = M
    return bases


def cmd_featurize(config, basis_paths=None):
    """Build the per-recording feature table archive; returns its path."""
    config.validate()
    digests = stage_digests(config)
    paths = _paths(config)
    target = paths["table"]
    if _reusable(target, "features", digests["features"]):
        logger.info("featurize: reusing feature table")
        return target

    ids, labels, splits, skipped, features = _load_city_recordings(config)
    train_ids = [i for i in ids if splits[i] == "train"]
    infer_opts = config.factorization.inference_options()
    vectors = {}

    if config.featurizer in ("h", "v"):
        bases = _load_bases(config, basis_paths)
        class_names = sorted(bases)

        def weights_for(job):
            class_name, rec_id = job
            return job, infer_weights(
                features[rec_id], bases[class_name], infer_opts
            )

        jobs = [(c, i) for c in class_names for i in ids]
        weights = dict(_parallel_map(weights_for, jobs, config.jobs))

        for class_name in class_names:
            if config.featurizer == "h":
                vectors[class_name] = np.vstack(
                    [h_feature(weights[(class_name, i)]) for i in ids]
                )
            else:
                train_rows = np.vstack(
                    [weights[(class_name, i)] for i in train_ids]
                )
                mixture = DiagonalGMM.from_options(
                    config.G,
                    replace(config.em,
                            seed=derive_seed(config.seed, "gmm", class_name)),
                ).fit(train_rows)
                ar.save_archive(
                    ar.gmm_archive(class_name, mixture, digests["features"]),
                    os.path.join(paths["gmm_dir"],
                                 f"{_safe_name(class_name)}.json"),
                )
                vectors[class_name] = np.vstack(
                    [v_feature(weights[(class_name, i)], mixture) for i in ids]
                )
    else:
        train_frames = np.hstack([features[i] for i in train_ids]).T
        background = DiagonalGMM.from_options(
            config.G,
            replace(config.em, seed=derive_seed(config.seed, "gmm", BACKGROUND)),
        ).fit(train_frames)
        ar.save_archive(
            ar.gmm_archive(BACKGROUND, background, digests["features"]),
            os.path.join(paths["gmm_dir"], "background.json"),
        )
        if config.featurizer == "boaw":
            rows = [boaw_feature(features[i], background) for i in ids]
        else:
            rows = [
                supervector_feature(features[i], background, config.relevance)
                for i in ids
            ]
        vectors[BACKGROUND] = np.vstack(rows)

    ar.save_archive(
        ar.table_archive(
            config.featurizer, sorted(vectors), ids, labels, splits, vectors,
            skipped, digests["features"],
        ),
        target,
    )
    logger.info("featurize: %d recordings, %d skipped", len(ids), len(skipped))
    return target


# -- stage 3: kernels, SVM training, evaluation ----------------------------

def _feature_rows(table, class_name, wanted_ids):
    index = {rec_id: row for row, rec_id in enumerate(table["ids"])}
    matrix = table["vectors"][class_name]
    return [matrix[index[i]] for i in wanted_ids]


def train_city_models(config, table_path=None):
    """Training half of train-eval: kernels, CV and per-city SVMs.

    Only the train split is touched; returns (models, context) where the
    context carries what evaluation needs to score the test split.
    """
    config.validate()
    digests = stage_digests(config)
    paths = _paths(config)
    if table_path is None:
        table_path = cmd_featurize(config)
    table = ar.table_from_archive(ar.load_archive(table_path))
    if table["featurizer"] != config.featurizer:
        raise ValueError(
            f"feature table was built with featurizer {table['featurizer']!r}, "
            f"config says {config.featurizer!r}"
        )
    ids = table["ids"]
    labels, splits = table["labels"], table["splits"]
    train_ids = [i for i in ids if splits[i] == "train"]
    test_ids = [i for i in ids if splits[i] == "test"]
    if not train_ids:
        raise ValueError("feature table has no training recordings")

    class_names = table["class_names"]
    train_kernels, gammas = [], {}
    for class_name in class_names:
        feats = _feature_rows(table, class_name, train_ids)
        if config.featurizer == "supervector":
            kernel = linear_kernel(feats, ids=train_ids)
        else:
            gammas[class_name] = average_pairwise_gamma(feats)
            kernel = exp_chi2_kernel(feats, gammas[class_name], ids=train_ids)
        ar.save_archive(
            ar.kernel_archive(kernel, digests["eval"]),
            os.path.join(paths["kernel_dir"],
                         f"{_safe_name(class_name)}.json"),
        )
        train_kernels.append(kernel)

    if config.fusion == "average":
        fused_train = fuse_average(train_kernels)
    elif config.fusion == "product":
        fused_train = fuse_product(train_kernels)
    else:
        fused_train = train_kernels[0]
    ar.save_archive(
        ar.kernel_archive(fused_train, digests["eval"]),
        os.path.join(paths["kernel_dir"], "fused_train.json"),
    )

    train_counts = Counter(labels[i] for i in train_ids)
    cities = [
        city for city in sorted(set(labels.values()))
        if train_counts[city] >= config.min_examples
        and train_counts[city] < len(train_ids)
    ]
    if not cities:
        raise ValueError(
            f"no city has at least {config.min_examples} training examples"
        )

    models = {}
    for city in cities:
        y = np.array([1.0 if labels[i] == city else -1.0 for i in train_ids])
        cv_cfg = replace(config.cv, seed=derive_seed(config.seed, "cv", city))
        best_c, fold_scores = cross_validate_C(fused_train.values, y, cv_cfg)
        logger.info(
            "train-eval %s: C=%g (mean %s %.4f over %d folds)",
            city, best_c, cv_cfg.selection_metric,
            float(np.mean(fold_scores[best_c])), cv_cfg.folds,
        )
        model = train_svm(fused_train, y, best_c, kernel_ref=digests["eval"])
        ar.save_archive(
            ar.svm_archive(city, model, digests["eval"]),
            os.path.join(paths["svm_dir"], f"{_safe_name(city)}.json"),
        )
        models[city] = model

    context = {
        "table": table,
        "train_ids": train_ids,
        "test_ids": test_ids,
        "gammas": gammas,
        "digests": digests,
    }
    return models, context


def cmd_train_and_eval(config, table_path=None):
    """Full train-eval stage; returns the evaluation report."""
    config.validate()
    digests = stage_digests(config)
    paths = _paths(config)
    if _reusable(paths["report"], "report", digests["eval"]):
        logger.info("train-eval: reusing report")
        return ar.report_from_archive(ar.load_archive(paths["report"]))

    models, context = train_city_models(config, table_path)
    table = context["table"]
    train_ids, test_ids = context["train_ids"], context["test_ids"]
    if not test_ids:
        raise ValueError("feature table has no test recordings to evaluate")
    labels = table["labels"]

    cross_kernels = []
    for class_name in table["class_names"]:
        train_feats = _feature_rows(table, class_name, train_ids)
        test_feats = _feature_rows(table, class_name, test_ids)
        if config.featurizer == "supervector":
            cross_kernels.append(
                cross_linear_kernel(train_feats, test_feats,
                                    train_ids=train_ids, test_ids=test_ids)
            )
        else:
            cross_kernels.append(
                cross_exp_chi2(train_feats, test_feats,
                               context["gammas"][class_name],
                               train_ids=train_ids, test_ids=test_ids)
            )
    if config.fusion == "average":
        fused_cross = fuse_average(cross_kernels)
    elif config.fusion == "product":
        fused_cross = fuse_product(cross_kernels)
    else:
        fused_cross = cross_kernels[0]

    test_counts = Counter(labels[i] for i in test_ids)
    eval_models, test_kernels, test_labels = {}, {}, {}
    for city in models:
        if test_counts[city] < config.min_examples:
            logger.warning(
                "train-eval: city %s has %d test examples (< %d); excluded",
                city, test_counts[city], config.min_examples,
            )
            continue
        eval_models[city] = models[city]
        test_kernels[city] = fused_cross
        test_labels[city] = {i: labels[i] == city for i in test_ids}
    if not eval_models:
        raise ValueError("no city is represented in the test split")

    report = build_report(eval_models, test_kernels, test_labels,
                          config_digest=digests["eval"])
    ar.save_archive(ar.report_archive(report), paths["report"])
    with open(paths["report_txt"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_text_table())
    logger.info("train-eval: MAP %.4f over %d cities",
                report.map_score, len(report.per_city_ap))
    return report


def run_all(config):
    """Chain train-basis, featurize and train-eval."""
    if config.featurizer in ("h", "v"):
        basis_paths = cmd_train_basis(config)
    else:
        basis_paths = None
    table_path = cmd_featurize(config, basis_paths)
    return cmd_train_and_eval(config, table_path)
