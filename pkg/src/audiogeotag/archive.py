"""Self-describing archive files for every persisted pipeline artifact.

An archive is a JSON document with four top-level keys: kind, version,
payload and checksum. The checksum is the SHA-256 of the canonical
payload serialization, so truncated or edited files fail loudly instead
of yielding a partial model. Numeric payloads are stored as decimal text
with 17 significant digits, which round-trips float64 exactly and keeps
the files diffable.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

ARCHIVE_VERSION = 1
KINDS = ("basis", "gmm", "svm", "kernel", "features", "report")


class ArchiveError(ValueError):
    """Raised for unreadable, corrupt, or schema-violating archives."""


def encode_floats(values):
    """Flatten to row-major decimal strings with 17 significant digits."""
    return ["%.17g" % v for v in np.asarray(values, dtype=np.float64).ravel()]


def decode_floats(strings, count=None):
    try:
        out = np.array([float(s) for s in strings], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ArchiveError(f"bad numeric payload: {exc}") from None
    if count is not None and out.size != count:
        raise ArchiveError(f"expected {count} values, found {out.size}")
    return out


def encode_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "values": encode_floats(a)}


def decode_matrix(doc):
    if not isinstance(doc, dict) or not {"rows", "cols", "values"} <= set(doc):
        raise ArchiveError("matrix document needs rows, cols and values")
    rows, cols = int(doc["rows"]), int(doc["cols"])
    return decode_floats(doc["values"], rows * cols).reshape(rows, cols)


@dataclass
class ModelArchive:
    kind: str
    payload: dict
    version: int = ARCHIVE_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArchiveError(f"unknown archive kind {self.kind!r}")
        _validate_payload(self.kind, self.payload)


_REQUIRED_KEYS = {
    "basis": {"class_name", "d", "k", "values", "options", "config_digest"},
    "gmm": {"name", "n_components", "dim", "weights", "means", "variances",
            "config_digest"},
    "svm": {"name", "support_ids", "dual_coeffs", "bias", "C", "kernel_ref",
            "config_digest"},
    "kernel": {"row_ids", "col_ids", "gamma", "values", "config_digest"},
    "report": {"per_city_ap", "map", "config_digest"},
}


def _validate_payload(kind, payload):
    if not isinstance(payload, dict):
        raise ArchiveError("payload must be an object")
    if kind == "features":
        schema = payload.get("schema")
        if schema == "clip_matrix":
            required = {"schema", "d", "n", "values"}
        elif schema == "table":
            required = {"schema", "featurizer", "class_names", "ids", "labels",
                        "splits", "vectors", "skipped", "config_digest"}
        else:
            raise ArchiveError(f"unknown features schema {schema!r}")
    else:
        required = _REQUIRED_KEYS[kind]
    missing = required - set(payload)
    if missing:
        raise ArchiveError(f"{kind} payload missing keys {sorted(missing)}")

    if kind == "basis":
        matrix = decode_matrix(payload["values"])
        if matrix.shape != (int(payload["d"]), int(payload["k"])):
            raise ArchiveError("basis matrix shape disagrees with d and k")
    elif kind == "gmm":
        g, dim = int(payload["n_components"]), int(payload["dim"])
        decode_floats(payload["weights"], g)
        for key in ("means", "variances"):
            if decode_matrix(payload[key]).shape != (g, dim):
                raise ArchiveError(f"gmm {key} shape disagrees with G and dim")
    elif kind == "svm":
        decode_floats(payload["dual_coeffs"], len(payload["support_ids"]))
    elif kind == "kernel":
        rows = len(payload["row_ids"])
        if payload["col_ids"] is None:
            decode_floats(payload["values"], rows * (rows + 1) // 2)
        else:
            decode_floats(payload["values"], rows * len(payload["col_ids"]))
    elif kind == "features" and payload["schema"] == "clip_matrix":
        if decode_matrix(payload["values"]).shape != (
            int(payload["d"]), int(payload["n"])
        ):
            raise ArchiveError("clip matrix shape disagrees with d and n")


def _canonical_payload(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _checksum(payload):
    return hashlib.sha256(_canonical_payload(payload).encode("utf-8")).hexdigest()


def save_archive(archive, path):
    """Atomically write an archive as deterministic, diffable JSON."""
    doc = {
        "kind": archive.kind,
        "version": archive.version,
        "payload": archive.payload,
        "checksum": _checksum(archive.payload),
    }
    path = str(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def load_archive(path):
    """Load and fully validate an archive; never returns a partial model."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: not a valid archive document: {exc}") from None
    if not isinstance(doc, dict) or not {
        "kind", "version", "payload", "checksum"
    } <= set(doc):
        raise ArchiveError(f"{path}: missing archive framing keys")
    if doc["version"] != ARCHIVE_VERSION:
        raise ArchiveError(
            f"{path}: unsupported version {doc['version']!r} "
            f"(expected {ARCHIVE_VERSION})"
        )
    if _checksum(doc["payload"]) != doc["checksum"]:
        raise ArchiveError(f"{path}: checksum failure; file corrupt or edited")
    try:
        return ModelArchive(kind=doc["kind"], payload=doc["payload"])
    except ArchiveError as exc:
        raise ArchiveError(f"{path}: {exc}") from None


# -- kind-specific builders and readers ----------------------------------

def basis_archive(class_name, M, options, config_digest=""):
    payload = {
        "class_name": str(class_name),
        "d": int(M.shape[0]),
        "k": int(M.shape[1]),
        "values": encode_matrix(M),
        "options": {
            "max_iters": int(options.max_iters),
            "rel_tolerance": "%.17g" % options.rel_tolerance,
            "epsilon": "%.17g" % options.epsilon,
            "seed": int(options.seed),
            "infer_max_iters": int(options.infer_max_iters),
        },
        "config_digest": config_digest,
    }
    return ModelArchive(kind="basis", payload=payload)


def basis_from_archive(archive):
    if archive.kind != "basis":
        raise ArchiveError(f"expected a basis archive, got {archive.kind!r}")
    return archive.payload["class_name"], decode_matrix(archive.payload["values"])


def gmm_archive(name, model, config_digest=""):
    payload = {
        "name": str(name),
        "n_components": int(model.weights_.size),
        "dim": int(model.means_.shape[1]),
        "weights": encode_floats(model.weights_),
        "means": encode_matrix(model.means_),
        "variances": encode_matrix(model.variances_),
        "config_digest": config_digest,
    }
    return ModelArchive(kind="gmm", payload=payload)


def gmm_from_archive(archive):
    if archive.kind != "gmm":
        raise ArchiveError(f"expected a gmm archive, got {archive.kind!r}")
    from .gmm import DiagonalGMM

    p = archive.payload
    g = int(p["n_components"])
    # stored variances are already floored; a zero floor keeps them intact
    model = DiagonalGMM(n_components=g, variance_floor=0.0)
    return model._set_model(
        decode_floats(p["weights"], g),
        decode_matrix(p["means"]),
        decode_matrix(p["variances"]),
    )


def svm_archive(name, model, config_digest=""):
    payload = {
        "name": str(name),
        "support_ids": list(model.support_ids),
        "dual_coeffs": encode_floats(model.dual_coeffs),
        "bias": "%.17g" % model.bias,
        "C": "%.17g" % model.C,
        "kernel_ref": model.kernel_ref,
        "config_digest": config_digest,
    }
    return ModelArchive(kind="svm", payload=payload)


def svm_from_archive(archive):
    if archive.kind != "svm":
        raise ArchiveError(f"expected an svm archive, got {archive.kind!r}")
    from .svm import SvmModel

    p = archive.payload
    return p["name"], SvmModel(
        support_ids=tuple(p["support_ids"]),
        dual_coeffs=decode_floats(p["dual_coeffs"], len(p["support_ids"])),
        bias=float(p["bias"]),
        C=float(p["C"]),
        kernel_ref=p["kernel_ref"],
    )


def kernel_archive(kernel, config_digest=""):
    if kernel.is_square:
        n = len(kernel.row_ids)
        tril = kernel.values[np.tril_indices(n)]
        payload = {
            "row_ids": list(kernel.row_ids),
            "col_ids": None,
            "gamma": None if kernel.gamma is None else "%.17g" % kernel.gamma,
            "values": encode_floats(tril),
            "config_digest": config_digest,
        }
    else:
        payload = {
            "row_ids": list(kernel.row_ids),
            "col_ids": list(kernel.col_ids),
            "gamma": None if kernel.gamma is None else "%.17g" % kernel.gamma,
            "values": encode_floats(kernel.values),
            "config_digest": config_digest,
        }
    return ModelArchive(kind="kernel", payload=payload)


def kernel_from_archive(archive):
    if archive.kind != "kernel":
        raise ArchiveError(f"expected a kernel archive, got {archive.kind!r}")
    from .kernels import KernelMatrix

    p = archive.payload
    gamma = None if p["gamma"] is None else float(p["gamma"])
    row_ids = tuple(p["row_ids"])
    if p["col_ids"] is None:
        n = len(row_ids)
        values = np.zeros((n, n))
        values[np.tril_indices(n)] = decode_floats(p["values"])
        values = values + np.tril(values, -1).T
        return KernelMatrix(values=values, row_ids=row_ids, gamma=gamma)
    return KernelMatrix(
        values=decode_floats(p["values"]).reshape(
            len(row_ids), len(p["col_ids"])
        ),
        row_ids=row_ids,
        col_ids=tuple(p["col_ids"]),
        gamma=gamma,
    )


def clip_features_archive(X):
    X = np.asarray(X, dtype=np.float64)
    payload = {
        "schema": "clip_matrix",
        "d": int(X.shape[0]),
        "n": int(X.shape[1]),
        "values": encode_matrix(X),
    }
    return ModelArchive(kind="features", payload=payload)


def clip_features_from_archive(archive):
    if archive.kind != "features" or archive.payload.get("schema") != "clip_matrix":
        raise ArchiveError("expected a clip_matrix features archive")
    return decode_matrix(archive.payload["values"])


def table_archive(featurizer, class_names, ids, labels, splits, vectors,
                  skipped=(), config_digest=""):
    payload = {
        "schema": "table",
        "featurizer": featurizer,
        "class_names": list(class_names),
        "ids": list(ids),
        "labels": {i: labels[i] for i in ids},
        "splits": {i: splits[i] for i in ids},
        "vectors": {c: encode_matrix(vectors[c]) for c in class_names},
        "skipped": list(skipped),
        "config_digest": config_digest,
    }
    return ModelArchive(kind="features", payload=payload)


def table_from_archive(archive):
    if archive.kind != "features" or archive.payload.get("schema") != "table":
        raise ArchiveError("expected a feature-table archive")
    p = archive.payload
    vectors = {c: decode_matrix(doc) for c, doc in p["vectors"].items()}
    for c, mat in vectors.items():
        if mat.shape[0] != len(p["ids"]):
            raise ArchiveError(f"feature table rows for {c!r} disagree with ids")
    table = dict(p)
    table["vectors"] = vectors
    return table


def report_archive(report):
    payload = {
        "per_city_ap": {c: "%.17g" % v for c, v in sorted(report.per_city_ap.items())},
        "map": "%.17g" % report.map_score,
        "config_digest": report.config_digest,
    }
    return ModelArchive(kind="report", payload=payload)


def report_from_archive(archive):
    if archive.kind != "report":
        raise ArchiveError(f"expected a report archive, got {archive.kind!r}")
    from .evaluate import EvalReport

    p = archive.payload
    return EvalReport(
        per_city_ap={c: float(v) for c, v in p["per_city_ap"].items()},
        map_score=float(p["map"]),
        config_digest=p["config_digest"],
    )
