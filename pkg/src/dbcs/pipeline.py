"""Experiment stages and the end-to-end ``run`` driver.

Every stage reads its inputs from, and writes its outputs to, a working
directory, so stages can be invoked one at a time::

    data/X.mat, data/labels.json, data/truth/D*.mat, data/truth/Z.mat   synth
    acquisition/operator.json, acquisition/A.mat, acquisition/Y.mat     acquire
    split.json, model/                                                  fit
    features/train.mat, features/test.mat                               encode
    reconstruction/Xhat.mat                                             reconstruct
    classification.json                                                 classify
    report.json                                                         report

Random streams: data uses ``Rng(seed).spawn(0)``, the split
``spawn(1)``, model initialization ``spawn(2)``; the operator is built from
``operator.seed`` (default: ``seed``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
import time

import numpy as np

from . import __version__
from .core import Rng, chain_product, ensure_dir, mat_read, mat_write
from .evaluation import LabeledDataset, class_report, knn_predict, accuracy, nmse, split_indices
from .exceptions import ConfigError, StageError
from .model import (DbcsModel, bcs_fit, dbcs_fit, default_lambda, dl_fit, encode,
                    initial_lambda, reconstruct as model_reconstruct)
from .operators import build_operator, measurements_for_ratio, operator_from_dict
from .solvers import LinearMap, ista
from .synthetic import synth as draw_synthetic

logger = logging.getLogger(__name__)

STAGES = ("synth", "acquire", "fit", "encode", "reconstruct", "classify", "report")
REPORT_SCHEMA_VERSION = 1


def report_schema():
    """The JSON schema every ``report.json`` conforms to."""
    from importlib.resources import files
    return json.loads(files("dbcs").joinpath("report.schema.json").read_text())


def _p(work, *parts):
    return os.path.join(work, *parts)


def _write_json(path, obj):
    ensure_dir(os.path.dirname(path) or ".")
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _labels(work):
    path = _p(work, "data", "labels.json")
    return np.asarray(_read_json(path), dtype=np.int64) if os.path.exists(path) else None


# -- stages -----------------------------------------------------------------

def stage_synth(cfg, work):
    """Draw synthetic data or load it from disk."""
    data = cfg.data
    ensure_dir(_p(work, "data"))
    if data.source == "file":
        X = mat_read(data.path)
        mat_write(X, _p(work, "data", "X.mat"))
        if data.labels_path:
            labels = [int(v) for v in _read_json(data.labels_path)]
            if len(labels) != X.shape[1]:
                raise ConfigError(f"{len(labels)} labels for {X.shape[1]} samples")
            _write_json(_p(work, "data", "labels.json"), labels)
        return
    out = draw_synthetic(data.synthetic, Rng(cfg.seed).spawn(0))
    mat_write(out.X, _p(work, "data", "X.mat"))
    if out.labels is not None:
        _write_json(_p(work, "data", "labels.json"), out.labels.tolist())
    if out.dictionaries is not None:
        ensure_dir(_p(work, "data", "truth"))
        for i, D in enumerate(out.dictionaries, start=1):
            mat_write(D, _p(work, "data", "truth", f"D{i}.mat"))
        mat_write(out.codes, _p(work, "data", "truth", "Z.mat"))


def resolve_operator(cfg, n):
    oc = cfg.operator
    seed = cfg.seed if oc.seed is None else oc.seed
    if oc.kind == "identity":
        m = n
    elif oc.kept_rows is not None:
        m = len(oc.kept_rows)
    elif oc.m is not None:
        m = oc.m
    else:
        m = measurements_for_ratio(n, oc.ratio)
    return build_operator(oc.kind, m, n, seed, density=oc.density, kept_rows=oc.kept_rows)


def stage_acquire(cfg, work):
    X = mat_read(_p(work, "data", "X.mat"))
    A = resolve_operator(cfg, X.shape[0])
    ensure_dir(_p(work, "acquisition"))
    _write_json(_p(work, "acquisition", "operator.json"), A.to_dict())
    A.export(_p(work, "acquisition", "A.mat"))
    mat_write(A.apply(X), _p(work, "acquisition", "Y.mat"))


def _load_operator(work):
    return operator_from_dict(_read_json(_p(work, "acquisition", "operator.json")))


def _fit_columns(cfg, work, n_samples):
    """Columns used for training plus the split (``None`` when unlabeled)."""
    labels = _labels(work)
    if labels is None:
        return np.arange(n_samples), None
    tr, te = split_indices(labels, cfg.eval.train_fraction, Rng(cfg.seed).spawn(1))
    split = {"train": tr.tolist(), "test": te.tolist()}
    if cfg.eval.feature_protocol == "transductive":
        return np.arange(n_samples), split
    return tr, split


def _fixed_dictionary(cfg, work, n):
    choice = cfg.model.dictionary
    truth = _p(work, "data", "truth")
    if choice == "auto":
        choice = "ground_truth" if os.path.isdir(truth) else "identity"
    if choice == "identity":
        return np.eye(n)
    if choice == "ground_truth":
        if not os.path.isdir(truth):
            raise ConfigError("dictionary 'ground_truth' needs planted synthetic data")
        names = sorted((f for f in os.listdir(truth) if f.startswith("D")),
                       key=lambda f: int(f[1:-4]))
        return chain_product([mat_read(os.path.join(truth, f)) for f in names])
    D = mat_read(choice)
    if D.shape[0] != n:
        raise ConfigError(f"dictionary {choice} has {D.shape[0]} rows, signals have {n}")
    return D


def stage_fit(cfg, work):
    mc = cfg.model
    A = _load_operator(work)
    Y = mat_read(_p(work, "acquisition", "Y.mat"))
    cols, split = _fit_columns(cfg, work, Y.shape[1])
    if split is not None:
        _write_json(_p(work, "split.json"), split)
    _write_json(_p(work, "fit_columns.json"), cols.tolist())
    opts = mc.solver.train_options()
    rng = Rng(cfg.seed).spawn(2)
    Y_fit = Y[:, cols]

    if mc.method == "dbcs":
        model = dbcs_fit(Y_fit, A, [A.n] + list(mc.atoms), mc.lam, mc.sweeps, opts, rng)
    elif mc.method == "bcs":
        D, Z, trace = bcs_fit(Y_fit, A, mc.atoms[0], mc.lam, mc.mu, mc.sweeps, opts, rng)
        lam = mc.lam if mc.lam is not None else initial_lambda(Y_fit, A, [A.n, mc.atoms[0]], rng)
        model = DbcsModel([D], Z, lam, [A.n, mc.atoms[0]], trace, cfg.seed)
    elif mc.method == "dl":
        X_fit = mat_read(_p(work, "data", "X.mat"))[:, cols]
        D, Z, trace = dl_fit(X_fit, mc.atoms[0], mc.lam, mc.sweeps, opts, rng)
        identity = build_operator("identity", A.n, A.n)
        lam = mc.lam if mc.lam is not None else initial_lambda(X_fit, identity,
                                                                [A.n, mc.atoms[0]], rng)
        model = DbcsModel([D], Z, lam, [A.n, mc.atoms[0]], trace, cfg.seed)
    else:  # cs_ista
        D = _fixed_dictionary(cfg, work, A.n)
        G = A.apply(D)
        lam = mc.lam if mc.lam is not None else default_lambda(G, Y_fit)
        Z, trace = ista(LinearMap.from_matrix(G), Y_fit, lam, None, opts.ista)
        model = DbcsModel([D], Z, lam, [A.n, D.shape[1]], trace, cfg.seed)
    model.seed = cfg.seed
    model.config = {"method": mc.method}
    model.save(_p(work, "model"))


def _encoding_inputs(cfg, work):
    """Operator and data the learned dictionaries act on."""
    if cfg.model.method == "dl":
        X = mat_read(_p(work, "data", "X.mat"))
        return build_operator("identity", X.shape[0], X.shape[0]), X
    return _load_operator(work), mat_read(_p(work, "acquisition", "Y.mat"))


def stage_encode(cfg, work):
    split_path = _p(work, "split.json")
    if not os.path.exists(split_path):
        logger.info("no labels; skipping encode")
        return
    split = _read_json(split_path)
    model = DbcsModel.load(_p(work, "model"))
    ensure_dir(_p(work, "features"))
    if cfg.eval.feature_protocol == "transductive":
        cols = np.asarray(_read_json(_p(work, "fit_columns.json")))
        pos = {int(c): i for i, c in enumerate(cols)}
        for part in ("train", "test"):
            idx = [pos[c] for c in split[part]]
            mat_write(model.codes[:, idx], _p(work, "features", f"{part}.mat"))
        return
    A, Y = _encoding_inputs(cfg, work)
    opts = cfg.model.solver.train_options().ista
    for part in ("train", "test"):
        Z = encode(A, model.dictionaries, Y[:, split[part]], model.lam, opts)
        mat_write(Z, _p(work, "features", f"{part}.mat"))


def stage_reconstruct(cfg, work):
    model = DbcsModel.load(_p(work, "model"))
    ensure_dir(_p(work, "reconstruction"))
    mat_write(model_reconstruct(model), _p(work, "reconstruction", "Xhat.mat"))


def stage_classify(cfg, work):
    split_path = _p(work, "split.json")
    if not os.path.exists(split_path):
        logger.info("no labels; skipping classify")
        return
    split = _read_json(split_path)
    labels = _labels(work)
    tr, te = np.asarray(split["train"]), np.asarray(split["test"])
    n_classes = int(labels.max()) + 1
    k = cfg.eval.k
    F_tr = mat_read(_p(work, "features", "train.mat"))
    F_te = mat_read(_p(work, "features", "test.mat"))
    pred = knn_predict(LabeledDataset(F_tr, labels[tr]), F_te, k)
    Y = mat_read(_p(work, "acquisition", "Y.mat"))
    raw_pred = knn_predict(LabeledDataset(Y[:, tr], labels[tr]), Y[:, te], k)
    result = class_report(pred, labels[te], n_classes)
    for row in result["per_class"]:
        row["sensitivity"] = _finite_or_none(row["sensitivity"])
        row["specificity"] = _finite_or_none(row["specificity"])
    result.update({
        "k": k,
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "predictions": pred.tolist(),
        "raw_measurement_accuracy": accuracy(raw_pred, labels[te]),
    })
    _write_json(_p(work, "classification.json"), result)


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def stage_report(cfg, work, wall_time=0.0):
    manifest = _read_json(_p(work, "model", "manifest.json"))
    X = mat_read(_p(work, "data", "X.mat"))
    A = _load_operator(work)
    cols = np.asarray(_read_json(_p(work, "fit_columns.json")))
    X_fit = X[:, cols]
    Xhat = mat_read(_p(work, "reconstruction", "Xhat.mat"))

    reconstruction = None
    if float(np.vdot(X_fit, X_fit)) > 0.0:
        Y = mat_read(_p(work, "acquisition", "Y.mat"))[:, cols]
        X_min_norm = np.linalg.pinv(A.to_dense()) @ Y
        reconstruction = {
            "nmse": nmse(X_fit, Xhat),
            "nmse_init": nmse(X_fit, np.zeros_like(X_fit)),
            "nmse_min_norm_lsq": nmse(X_fit, X_min_norm),
            "has_ground_truth": True,
        }

    classification = None
    cls_path = _p(work, "classification.json")
    if os.path.exists(cls_path):
        classification = _read_json(cls_path)
        classification.pop("predictions", None)

    artifacts = {}
    for root, _, files in os.walk(work):
        for name in files:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, work).replace(os.sep, "/")
            if name.endswith(".mat"):
                artifacts[rel] = _digest(full)

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "version": f"dbcs {__version__} (DBCS1 matrix format)",
        "config": cfg.to_dict(),
        "method": cfg.model.method,
        "feature_protocol": cfg.eval.feature_protocol,
        "uses_uncompressed_signals": cfg.model.method == "dl",
        "operator": {"kind": A.kind, "m": A.m, "n": A.n, "seed": A.seed},
        "layer_sizes": manifest["layer_sizes"],
        "lambda": manifest["lambda"],
        "objective_trace": manifest["objective_trace"],
        "reconstruction": reconstruction,
        "classification": classification,
        "artifacts": dict(sorted(artifacts.items())),
        "wall_time_seconds": float(wall_time),
    }
    _write_json(_p(work, "report.json"), report)
    return report


STAGE_FUNCS = {
    "synth": stage_synth,
    "acquire": stage_acquire,
    "fit": stage_fit,
    "encode": stage_encode,
    "reconstruct": stage_reconstruct,
    "classify": stage_classify,
    "report": stage_report,
}


def run_stage(name, cfg, work, **kwargs):
    """Run one stage, wrapping failures in :class:`StageError`."""
    ensure_dir(work)
    logger.info("stage %s", name)
    try:
        return STAGE_FUNCS[name](cfg, work, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run(cfg, out_dir=None):
    """Execute every stage and return the path of ``report.json``.

    Outputs are staged in a scratch directory next to ``out_dir`` and moved
    into place only on success; a failed run leaves nothing behind.  An
    existing ``out_dir`` is replaced only if it is empty or holds a previous
    report.
    """
    out_dir = os.path.abspath(out_dir or cfg.output_dir)
    if os.path.isdir(out_dir) and os.listdir(out_dir) and \
            not os.path.exists(os.path.join(out_dir, "report.json")):
        raise StageError("run", FileExistsError(
            f"{out_dir} is non-empty and does not hold a previous report"))
    parent = os.path.dirname(out_dir)
    ensure_dir(parent)
    scratch = tempfile.mkdtemp(prefix=".dbcs-run-", dir=parent)
    start = time.perf_counter()
    try:
        for name in STAGES[:-1]:
            run_stage(name, cfg, scratch)
        run_stage("report", cfg, scratch, wall_time=time.perf_counter() - start)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if os.path.exists(out_dir):
        shutil.rmtree(out_dir)
    os.replace(scratch, out_dir)
    return os.path.join(out_dir, "report.json")


def export_csv(matrix_path, out_path):
    """Write a DBCS1 matrix as CSV, one line per row, ``%.17g`` values."""
    m = mat_read(matrix_path)
    with open(out_path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
