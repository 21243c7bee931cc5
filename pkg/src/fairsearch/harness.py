"""Experiment orchestration behind the CLI.

Each command reads datasets through the schema, keeps every random choice
behind explicit seeds, writes a manifest next to its outputs, and reports
fairness-confusion statistics. Reports are byte-identical across repeated
runs with the same inputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, confusion, generate, nncore
from .data import (
    DatasetSchema,
    Instance,
    instances_to_arrays,
    kmeans_seeds,
    load_dataset,
    load_schema,
)
from .errors import ConfigError
from .generate import GenerationResult, SearchConfig

log = logging.getLogger(__name__)

TECHNIQUES = ("robustfair", "fgsm", "pgd")
TEST_FRACTION = 0.2


# ---------------------------------------------------------------------------
# Shared plumbing


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    dataset: str
    schema: str
    model: str | None
    technique: str | None
    search: dict | None
    train: dict | None
    out: str
    dataset_sha256: str

    def write(self, path: Path) -> None:
        doc = dataclasses.asdict(self)
        doc["tool"] = "fairsearch"
        doc["version"] = __version__
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
        _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def split_dataset(
    instances: list[Instance], split_seed: int, test_fraction: float = TEST_FRACTION
) -> tuple[list[Instance], list[Instance]]:
    """Seeded train/test partition; the test block is the permutation head."""
    n = len(instances)
    n_test = int(round(n * test_fraction))
    perm = np.random.default_rng(split_seed).permutation(n)
    test_idx = set(int(i) for i in perm[:n_test])
    train = [inst for i, inst in enumerate(instances) if i not in test_idx]
    test = [instances[int(i)] for i in perm[:n_test]]
    return train, test


def evaluate_instances(
    net: nncore.DenseNetwork,
    X: np.ndarray,
    y: np.ndarray,
    schema: DatasetSchema,
    cap: int,
    threshold: float,
    rng_seed: int = 0,
) -> tuple[np.ndarray, confusion.ConfusionReport]:
    """Classify rows into the fairness confusion matrix and tally."""
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed & 0xFFFFFFFF, 0xC1A5]))
    codes = confusion.classify_batch(net, X, y, schema, cap=cap, threshold=threshold, rng=rng)
    return codes, confusion.tally_codes(codes)


def _report_doc(report: confusion.ConfusionReport, technique: str, budget: dict) -> dict:
    return {"technique": technique, **report.to_dict(), "budget": budget}


def _write_report(out_dir: Path, report: confusion.ConfusionReport, technique: str, budget: dict):
    doc = _report_doc(report, technique, budget)
    _atomic_write_text(out_dir / "report.json", json.dumps(doc, indent=2) + "\n")
    header = ",".join(confusion.REPORT_COLUMNS)
    row = ",".join(str(c) for c in report.counts_row())
    _atomic_write_text(out_dir / "report.csv", f"{header}\n{row}\n")


# ---------------------------------------------------------------------------
# train


def cmd_train(
    dataset_path,
    schema_path,
    out_model,
    train_cfg: nncore.TrainConfig | None = None,
    threshold: float = 0.5,
    counterpart_cap: int = 256,
    hidden=nncore.FCNN6_HIDDEN,
) -> dict:
    """Train a baseline model on the 80% split and report test-split
    confusion rates; writes the model with its training fingerprint."""
    schema = load_schema(schema_path)
    instances = load_dataset(dataset_path, schema)
    cfg = train_cfg or nncore.TrainConfig()
    train_set, test_set = split_dataset(instances, cfg.rng_seed)

    net = nncore.new_network(schema.n_features, hidden=hidden, rng_seed=cfg.rng_seed)
    net = nncore.train(net, instances_to_arrays(train_set), cfg)

    X_test, y_test = instances_to_arrays(test_set)
    _, report = evaluate_instances(
        net, X_test, y_test, schema, counterpart_cap, threshold, cfg.rng_seed
    )

    fingerprint = {
        "train": cfg.fingerprint(),
        "split_seed": cfg.rng_seed,
        "test_fraction": TEST_FRACTION,
        "threshold": threshold,
        "counterpart_cap": counterpart_cap,
        "hidden": list(hidden),
        "schema_name": schema.name,
        "dataset_sha256": _sha256_file(dataset_path),
        "final_loss": net.final_loss,
    }
    out_model = Path(out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    nncore.save_model(net, out_model, fingerprint)
    metrics = _report_doc(report, "baseline", {"train_rows": len(train_set), "test_rows": len(test_set)})
    _atomic_write_text(out_model.with_suffix(".metrics.json"), json.dumps(metrics, indent=2) + "\n")
    RunManifest(
        command="train",
        dataset=str(dataset_path),
        schema=str(schema_path),
        model=str(out_model),
        technique=None,
        search=None,
        train=fingerprint,
        out=str(out_model),
        dataset_sha256=fingerprint["dataset_sha256"],
    ).write(out_model.with_suffix(".manifest.json"))
    return metrics


# ---------------------------------------------------------------------------
# generate


def _load_model_context(model_path, dataset_path, schema_path):
    schema = load_schema(schema_path)
    net, fingerprint = nncore.load_model(model_path)
    if net.input_dim != schema.n_features:
        raise ConfigError(
            f"model expects {net.input_dim} features, schema has {schema.n_features}"
        )
    instances = load_dataset(dataset_path, schema)
    split_seed = int(fingerprint.get("split_seed", 0))
    train_set, test_set = split_dataset(instances, split_seed)
    threshold = float(fingerprint.get("threshold", 0.5))
    return schema, net, fingerprint, train_set, test_set, threshold


def run_technique(
    net: nncore.DenseNetwork,
    test_set: list[Instance],
    schema: DatasetSchema,
    technique: str,
    cfg: SearchConfig,
) -> GenerationResult:
    """Run one generation technique over the testing split.

    Search budgets follow the equalized protocol: the two-phase search uses
    n_seeds with its global/local iterations, PGD uses n_seeds seeds by
    pgd_steps steps, and FGSM consumes n_seeds*pgd_steps one-shot samples.
    """
    if technique not in TECHNIQUES:
        raise ConfigError(f"unknown technique {technique!r}")
    rng = np.random.default_rng(cfg.rng_seed)
    if technique == "fgsm":
        n_samples = cfg.n_seeds * cfg.pgd_steps
        picks = rng.integers(0, len(test_set), size=n_samples)
        samples = [test_set[int(i)] for i in picks]
        return generate.fgsm(net, samples, schema, cfg.pgd_eps)
    seeds = kmeans_seeds(test_set, cfg.k_clusters, cfg.n_seeds, rng)
    if technique == "pgd":
        return generate.pgd(net, seeds, schema, cfg)
    return generate.robustfair(net, seeds, schema, cfg)


def _write_instances(out_dir: Path, result: GenerationResult, schema: DatasetSchema,
                     codes: np.ndarray, technique: str, threshold: float, cap: int):
    # CSV: denormalized, rounded onto the attribute domains, loadable as a
    # dataset. The JSON sidecar keeps exact normalized vectors for replay.
    label_attr = schema.label_attribute
    hard = result.binary_labels().astype(int)
    raw_rows = schema.denormalize_rows(result.features)
    label_pos = schema.attributes.index(label_attr)
    lines = [",".join(a.name for a in schema.attributes)]
    for row, lbl in zip(raw_rows, hard):
        row = list(row)
        row.insert(label_pos, label_attr.values[lbl])
        lines.append(",".join(row))
    _atomic_write_text(out_dir / "instances.csv", "\n".join(lines) + "\n")

    meta = {
        "technique": technique,
        "threshold": threshold,
        "counterpart_cap": cap,
        "feature_names": [a.name for a in schema.feature_attributes],
        "n": len(result),
        "gradient_evals": result.gradient_evals,
        "truncated": result.truncated,
        "features": result.features.tolist(),
        "approx_label": result.approx_labels.tolist(),
        "phase": [generate.PHASES[c] for c in result.phase_codes],
        "direction": [generate.DIRECTIONS[c] for c in result.direction_codes],
        "seed_id": result.seed_ids.tolist(),
        "iteration": result.iterations.tolist(),
        "degenerate": result.degenerate.astype(bool).tolist(),
        "category": [confusion.CATEGORIES[c] for c in codes],
    }
    _atomic_write_text(out_dir / "instances.meta.json", json.dumps(meta) + "\n")


def cmd_generate(
    model_path,
    dataset_path,
    schema_path,
    technique: str,
    cfg: SearchConfig,
    out_dir,
) -> confusion.ConfusionReport:
    """Generate adversarial instances, classify each against its
    (approximated or carried-over) ground truth, and write the run outputs."""
    schema, net, fingerprint, _, test_set, threshold = _load_model_context(
        model_path, dataset_path, schema_path
    )
    cap = int(fingerprint.get("counterpart_cap", cfg.counterpart_cap))
    result = run_technique(net, test_set, schema, technique, cfg)
    codes, report = evaluate_instances(
        net, result.features, result.binary_labels(), schema, cap, threshold, cfg.rng_seed
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_instances(out_dir, result, schema, codes, technique, threshold, cap)
    budget = {
        "emissions": len(result),
        "gradient_evals": result.gradient_evals,
        "truncated": result.truncated,
    }
    _write_report(out_dir, report, technique, budget)
    RunManifest(
        command="generate",
        dataset=str(dataset_path),
        schema=str(schema_path),
        model=str(model_path),
        technique=technique,
        search=cfg.to_dict(),
        train=None,
        out=str(out_dir),
        dataset_sha256=_sha256_file(dataset_path),
    ).write(out_dir / "manifest.json")
    return report


# ---------------------------------------------------------------------------
# report (recompute from written instance files)


def load_instances_meta(meta_path) -> dict:
    doc = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    doc["features"] = np.asarray(doc["features"], dtype=np.float64)
    doc["approx_label"] = np.asarray(doc["approx_label"], dtype=np.float64)
    return doc


def cmd_report(meta_path, model_path, schema_path, out_dir=None) -> confusion.ConfusionReport:
    """Re-classify a written instance file; must reproduce the original
    report exactly."""
    schema = load_schema(schema_path)
    net, fingerprint = nncore.load_model(model_path)
    meta = load_instances_meta(meta_path)
    threshold = float(meta.get("threshold", fingerprint.get("threshold", 0.5)))
    cap = int(meta.get("counterpart_cap", 256))
    y = (meta["approx_label"] >= 0.5).astype(np.float64)
    codes, report = evaluate_instances(net, meta["features"], y, schema, cap, threshold)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        budget = {
            "emissions": int(meta["n"]),
            "gradient_evals": int(meta["gradient_evals"]),
            "truncated": bool(meta["truncated"]),
        }
        _write_report(out_dir, report, meta.get("technique", "unknown"), budget)
    return report


# ---------------------------------------------------------------------------
# retrain


def sample_adversarial(
    meta_docs: list[dict],
    fraction: float,
    rng_seed: int,
    stratified: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform (optionally per-category) sample of the detected
    false-or-biased instances; labels are the binarized approximations."""
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    feats, labels, cats = [], [], []
    for doc in meta_docs:
        mask = np.array([c != confusion.TF for c in doc["category"]], dtype=bool)
        feats.append(doc["features"][mask])
        labels.append((doc["approx_label"][mask] >= 0.5).astype(np.float64))
        cats.extend(c for c in doc["category"] if c != confusion.TF)
    X = np.concatenate(feats) if feats else np.empty((0, 0))
    y = np.concatenate(labels) if labels else np.empty(0)
    if X.shape[0] == 0:
        raise ConfigError("no false or biased instances in the adversarial files")

    rng = np.random.default_rng(rng_seed)
    if not stratified:
        k = max(1, int(round(fraction * X.shape[0])))
        take = np.sort(rng.choice(X.shape[0], size=k, replace=False))
        return X[take], y[take]
    cats = np.array(cats)
    picks = []
    for cat in (confusion.TB, confusion.FF, confusion.FB):
        idx = np.flatnonzero(cats == cat)
        if idx.size == 0:
            continue
        k = max(1, int(round(fraction * idx.size)))
        picks.append(rng.choice(idx, size=k, replace=False))
    take = np.sort(np.concatenate(picks))
    return X[take], y[take]


def cmd_retrain(
    model_path,
    dataset_path,
    schema_path,
    meta_paths: list,
    fraction: float = 0.10,
    rng_seed: int = 0,
    out_dir=None,
    stratified: bool = False,
) -> dict:
    """Augment the original training split with sampled detected instances,
    retrain from scratch with the stored TrainConfig, and compare
    before/after confusion rates on the untouched test split."""
    schema, net, fingerprint, train_set, test_set, threshold = _load_model_context(
        model_path, dataset_path, schema_path
    )
    cap = int(fingerprint.get("counterpart_cap", 256))
    meta_docs = [load_instances_meta(p) for p in meta_paths]
    X_adv, y_adv = sample_adversarial(meta_docs, fraction, rng_seed, stratified)

    X_train, y_train = instances_to_arrays(train_set)
    X_aug = np.concatenate([X_train, X_adv])
    y_aug = np.concatenate([y_train, y_adv])

    train_doc = fingerprint.get("train", {})
    cfg = nncore.TrainConfig(
        epochs=int(train_doc.get("epochs", 100)),
        batch_size=int(train_doc.get("batch_size", 32)),
        learning_rate=float(train_doc.get("learning_rate", 1e-3)),
        optimizer=train_doc.get("optimizer", "adam"),
        rng_seed=int(train_doc.get("rng_seed", 0)),
    )
    hidden = fingerprint.get("hidden", list(nncore.FCNN6_HIDDEN))
    fresh = nncore.new_network(schema.n_features, hidden=hidden, rng_seed=cfg.rng_seed)
    retrained = nncore.train(fresh, (X_aug, y_aug), cfg)

    X_test, y_test = instances_to_arrays(test_set)
    _, before = evaluate_instances(net, X_test, y_test, schema, cap, threshold, rng_seed)
    _, after = evaluate_instances(retrained, X_test, y_test, schema, cap, threshold, rng_seed)
    comparison = {
        "fraction": fraction,
        "stratified": stratified,
        "augmented_with": int(X_adv.shape[0]),
        "before": before.to_dict(),
        "after": after.to_dict(),
        "delta": {
            "ACC": after.acc - before.acc,
            "IF": after.individual_fairness - before.individual_fairness,
        },
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        new_fingerprint = dict(fingerprint)
        new_fingerprint["retrained_from"] = str(model_path)
        new_fingerprint["final_loss"] = retrained.final_loss
        nncore.save_model(retrained, out_dir / "model.json", new_fingerprint)
        _atomic_write_text(out_dir / "comparison.json", json.dumps(comparison, indent=2) + "\n")
        RunManifest(
            command="retrain",
            dataset=str(dataset_path),
            schema=str(schema_path),
            model=str(model_path),
            technique=None,
            search=None,
            train={**cfg.fingerprint(), "fraction": fraction, "rng_seed": rng_seed},
            out=str(out_dir),
            dataset_sha256=_sha256_file(dataset_path),
        ).write(out_dir / "manifest.json")
    comparison["model"] = retrained
    return comparison


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(
    model_path,
    dataset_path,
    schema_path,
    base_cfg: SearchConfig,
    seeds_grid: list[int],
    global_grid: list[int],
    local_grid: list[int],
    out_csv=None,
) -> list[dict]:
    """Run the two-phase search over a parameter grid; one row of counts per
    grid point, ready for external plotting."""
    if not seeds_grid or not global_grid or not local_grid:
        raise ConfigError("sweep grids must be nonempty")
    schema, net, fingerprint, _, test_set, threshold = _load_model_context(
        model_path, dataset_path, schema_path
    )
    cap = int(fingerprint.get("counterpart_cap", base_cfg.counterpart_cap))
    rows = []
    for n_seeds in seeds_grid:
        for g_iter in global_grid:
            for l_iter in local_grid:
                cfg = dataclasses.replace(
                    base_cfg, n_seeds=n_seeds, global_iter=g_iter, local_iter=l_iter
                )
                result = run_technique(net, test_set, schema, "robustfair", cfg)
                _, report = evaluate_instances(
                    net, result.features, result.binary_labels(), schema, cap,
                    threshold, cfg.rng_seed,
                )
                rows.append(
                    {
                        "n_seeds": n_seeds,
                        "global_iter": g_iter,
                        "local_iter": l_iter,
                        "N_F": report.n_false,
                        "N_B": report.n_biased,
                        "N_F|B": report.n_false_or_biased,
                        "SUM": report.total,
                        "truncated": result.truncated,
                    }
                )
                log.info("sweep point %s", rows[-1])
    if out_csv is not None:
        header = list(rows[0].keys())
        lines = [",".join(header)]
        lines += [",".join(str(r[h]) for h in header) for r in rows]
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(out_csv, "\n".join(lines) + "\n")
    return rows
