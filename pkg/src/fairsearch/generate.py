"""Adversarial instance generation.

Two-phase fairness-confusion directed search (a breadth phase whose
emissions become the next round's seeds, then a depth phase perturbing one
attribute at a time) plus FGSM and PGD baselines under an equalized search
budget. Results are stored columnwise; iterating yields GeneratedInstance
records.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import nncore, perturb
from .data import (
    DEFAULT_COUNTERPART_CAP,
    DatasetSchema,
    GeneratedInstance,
    Instance,
    Provenance,
    clip_to_domain,
    instances_to_arrays,
    similar_counterparts,
)
from .errors import ConfigError

log = logging.getLogger(__name__)

PHASE_GLOBAL = "global"
PHASE_LOCAL = "local"
PHASE_FGSM = "fgsm"
PHASE_PGD = "pgd"
PHASES = (PHASE_GLOBAL, PHASE_LOCAL, PHASE_FGSM, PHASE_PGD)

DIRECTIONS = (perturb.FF, perturb.TB, perturb.FB, perturb.LOSS_ASCENT)
_PHASE_CODE = {p: i for i, p in enumerate(PHASES)}
_DIR_CODE = {d: i for i, d in enumerate(DIRECTIONS)}


@dataclass
class SearchConfig:
    """Budgets and step sizes for all generation techniques."""

    n_seeds: int = 200
    global_iter: int = 5
    local_iter: int = 5
    step_p: float = 0.05  # in normalized [0,1] units
    pgd_eps: float = 0.3
    pgd_alpha: float = 0.05
    pgd_steps: int = 25
    rng_seed: int = 0
    counterpart_cap: int = DEFAULT_COUNTERPART_CAP
    k_clusters: int = 4  # K-Means clusters behind seed selection
    # Optional per-round cap on the breadth-phase seed pool (None = off, the
    # paper-faithful setting); when hit, the pool is subsampled uniformly.
    max_pool: int | None = None

    def __post_init__(self):
        if self.n_seeds < 1 or self.global_iter < 1 or self.local_iter < 1:
            raise ConfigError("n_seeds, global_iter and local_iter must be >= 1")
        if self.step_p <= 0 or self.pgd_eps <= 0 or self.pgd_alpha <= 0:
            raise ConfigError("step sizes must be > 0")
        if self.pgd_steps < 1:
            raise ConfigError("pgd_steps must be >= 1")
        if self.counterpart_cap < 1:
            raise ConfigError("counterpart_cap must be >= 1")
        if self.k_clusters < 1:
            raise ConfigError("k_clusters must be >= 1")
        if self.max_pool is not None and self.max_pool < 1:
            raise ConfigError("max_pool must be >= 1 or None")

    def to_dict(self) -> dict:
        return {
            "n_seeds": self.n_seeds,
            "global_iter": self.global_iter,
            "local_iter": self.local_iter,
            "step_p": self.step_p,
            "pgd_eps": self.pgd_eps,
            "pgd_alpha": self.pgd_alpha,
            "pgd_steps": self.pgd_steps,
            "rng_seed": self.rng_seed,
            "counterpart_cap": self.counterpart_cap,
            "k_clusters": self.k_clusters,
            "max_pool": self.max_pool,
        }


class GenerationResult:
    """Column-oriented sequence of generated instances.

    Keeps features and labels as arrays so paper-scale runs (about a million
    emissions) stay cheap; indexing materializes GeneratedInstance records.
    """

    def __init__(
        self,
        features: np.ndarray,
        approx_labels: np.ndarray,
        phase_codes: np.ndarray,
        direction_codes: np.ndarray,
        seed_ids: np.ndarray,
        iterations: np.ndarray,
        degenerate: np.ndarray,
        gradient_evals: int = 0,
        truncated: bool = False,
    ):
        self.features = features
        self.approx_labels = approx_labels
        self.phase_codes = phase_codes
        self.direction_codes = direction_codes
        self.seed_ids = seed_ids
        self.iterations = iterations
        self.degenerate = degenerate
        self.gradient_evals = gradient_evals
        self.truncated = truncated

    @classmethod
    def empty(cls, n_features: int) -> "GenerationResult":
        return cls(
            np.empty((0, n_features)),
            np.empty(0),
            np.empty(0, dtype=np.uint8),
            np.empty(0, dtype=np.uint8),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int32),
            np.empty(0, dtype=bool),
        )

    @classmethod
    def concat(cls, parts: Sequence["GenerationResult"]) -> "GenerationResult":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ConfigError("nothing to concatenate")
        return cls(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.approx_labels for p in parts]),
            np.concatenate([p.phase_codes for p in parts]),
            np.concatenate([p.direction_codes for p in parts]),
            np.concatenate([p.seed_ids for p in parts]),
            np.concatenate([p.iterations for p in parts]),
            np.concatenate([p.degenerate for p in parts]),
            gradient_evals=sum(p.gradient_evals for p in parts),
            truncated=any(p.truncated for p in parts),
        )

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> GeneratedInstance:
        return GeneratedInstance(
            features=self.features[i],
            approx_label=float(self.approx_labels[i]),
            provenance=Provenance(
                phase=PHASES[self.phase_codes[i]],
                direction=DIRECTIONS[self.direction_codes[i]],
                seed_id=int(self.seed_ids[i]),
                iteration=int(self.iterations[i]),
                degenerate=bool(self.degenerate[i]),
            ),
        )

    def __iter__(self) -> Iterator[GeneratedInstance]:
        for i in range(len(self)):
            yield self[i]

    def binary_labels(self) -> np.ndarray:
        """Approximated ground truths as hard 0/1 labels."""
        return (self.approx_labels >= 0.5).astype(np.float64)


class _Accumulator:
    def __init__(self):
        self.parts: list[tuple] = []
        self.gradient_evals = 0
        self.truncated = False

    def add(self, feats, labels, phase, direction, seed_ids, iteration, degenerate=None):
        n = feats.shape[0]
        if n == 0:
            return
        if degenerate is None:
            degenerate = np.zeros(n, dtype=bool)
        iters = np.full(n, iteration, dtype=np.int32)
        self.parts.append(
            (
                feats,
                labels,
                np.full(n, _PHASE_CODE[phase], dtype=np.uint8),
                np.full(n, _DIR_CODE[direction], dtype=np.uint8),
                np.asarray(seed_ids, dtype=np.int64),
                iters,
                degenerate,
            )
        )

    def result(self, n_features: int) -> GenerationResult:
        if not self.parts:
            out = GenerationResult.empty(n_features)
            out.gradient_evals = self.gradient_evals
            out.truncated = self.truncated
            return out
        cols = list(zip(*self.parts))
        return GenerationResult(
            *(np.concatenate(c) for c in cols),
            gradient_evals=self.gradient_evals,
            truncated=self.truncated,
        )


def counterpart_predictions(
    net: nncore.DenseNetwork, X: np.ndarray, schema: DatasetSchema
) -> np.ndarray:
    """Predictions over the full sensitive grid, shape (n, grid_size).

    Caches the non-sensitive share of the first-layer product; each grid
    combination then costs one tail pass over the batch.
    """
    grid = schema.sensitive_grid()
    first = net.layers[0]
    z_ns = X[:, schema.nonsensitive_indices] @ first.weights[:, schema.nonsensitive_indices].T
    z_ns += first.bias
    grid_term = grid @ first.weights[:, schema.sensitive_indices].T
    preds = np.empty((X.shape[0], grid.shape[0]))
    for j in range(grid.shape[0]):
        preds[:, j] = nncore.forward_from_preact(net, z_ns + grid_term[j])
    return preds


def _entropy(*parts: int) -> list[int]:
    return [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]


def _max_diff_batch(
    net: nncore.DenseNetwork,
    X: np.ndarray,
    schema: DatasetSchema,
    cap: int,
    seed: int,
    phase_tag: int,
    round_tag: int = 0,
    row_offset: int = 0,
) -> np.ndarray:
    """Per-row counterpart with the most diverging prediction."""
    if schema.sensitive_product_size <= cap:
        grid = schema.sensitive_grid()
        fv = nncore.forward_batch(net, X)
        preds = counterpart_predictions(net, X, schema)
        j = np.argmax(np.abs(preds - fv[:, None]), axis=1)
        out = X.copy()
        out[:, schema.sensitive_indices] = grid[j]
        return out
    # Sampled sub-population: one stream per absolute row index so results
    # do not depend on chunking.
    out = X.copy()
    for i in range(X.shape[0]):
        ss = np.random.SeedSequence(_entropy(seed, phase_tag, round_tag, row_offset + i))
        cps = similar_counterparts(X[i], schema, cap, np.random.default_rng(ss))
        fv = nncore.forward(net, X[i])
        preds = nncore.forward_batch(net, cps)
        out[i] = cps[int(np.argmax(np.abs(preds - fv)))]
    return out


def _taylor_labels(net, X, Y, G, VP) -> np.ndarray:
    fv = nncore.forward_batch(net, X)
    loss_v = (Y - fv) ** 2
    dot = np.einsum("ij,ij->i", G, VP - X)
    f_vp = nncore.forward_batch(net, VP)
    return perturb.ground_truth_batch(loss_v, dot, f_vp, Y)


def global_generation(
    net: nncore.DenseNetwork,
    seeds: Sequence[Instance],
    schema: DatasetSchema,
    cfg: SearchConfig,
) -> GenerationResult:
    """Breadth phase: each round fans every pool member into the three
    fairness-confusion directions; the emissions seed the next round."""
    if len(seeds) == 0:
        raise ConfigError("global generation needs at least one seed")
    X, Y = instances_to_arrays(seeds)
    ids = np.arange(len(seeds), dtype=np.int64)
    mask = schema.sensitive_mask()
    acc = _Accumulator()
    pool_rng = np.random.default_rng(np.random.SeedSequence(_entropy(cfg.rng_seed, 0x706F6F6C)))

    rules = ((perturb.FF, perturb.directions_ff),
             (perturb.TB, perturb.directions_tb),
             (perturb.FB, perturb.directions_fb))

    for rnd in range(cfg.global_iter):
        Vp = _max_diff_batch(net, X, schema, cfg.counterpart_cap, cfg.rng_seed, 0, rnd)
        G = nncore.input_gradient_batch(net, X, Y)
        Gp = nncore.input_gradient_batch(net, Vp, Y)
        acc.gradient_evals += 2 * X.shape[0]

        next_feats, next_labels, next_ids = [], [], []
        for kind, rule in rules:
            D = rule(G, Gp, mask)
            VP = clip_to_domain(X + cfg.step_p * D)
            YP = _taylor_labels(net, X, Y, G, VP)
            YP = np.clip(YP, 0.0, 1.0)
            deg = ~D.any(axis=1)
            acc.add(VP, YP, PHASE_GLOBAL, kind, ids, rnd, deg)
            next_feats.append(VP)
            next_labels.append(YP)
            next_ids.append(ids)

        X = np.concatenate(next_feats)
        Y = np.concatenate(next_labels)
        ids = np.concatenate(next_ids)
        if cfg.max_pool is not None and X.shape[0] > cfg.max_pool:
            keep = np.sort(pool_rng.choice(X.shape[0], size=cfg.max_pool, replace=False))
            X, Y, ids = X[keep], Y[keep], ids[keep]
            acc.truncated = True
    return acc.result(schema.n_features)


def local_generation(
    net: nncore.DenseNetwork,
    generated: GenerationResult,
    schema: DatasetSchema,
    cfg: SearchConfig,
    chunk: int = 16384,
) -> GenerationResult:
    """Depth phase: perturb one attribute at a time per direction, picking
    attributes in ascending order of the direction's absolute entries
    (zero entries are skipped; perturbing them would be a no-op)."""
    if len(generated) == 0:
        raise ConfigError("local generation needs a nonempty global pool")
    mask = schema.sensitive_mask()
    steps = min(cfg.local_iter, len(schema.nonsensitive_indices))
    if steps < cfg.local_iter:
        log.warning(
            "local_iter=%d clamped to %d non-sensitive attributes", cfg.local_iter, steps
        )
    acc = _Accumulator()
    rules = ((perturb.FF, perturb.directions_ff),
             (perturb.TB, perturb.directions_tb),
             (perturb.FB, perturb.directions_fb))

    for start in range(0, len(generated), chunk):
        X = generated.features[start : start + chunk]
        Y = generated.approx_labels[start : start + chunk]
        ids = generated.seed_ids[start : start + chunk]
        Vp = _max_diff_batch(net, X, schema, cfg.counterpart_cap, cfg.rng_seed, 1, 0, start)
        G = nncore.input_gradient_batch(net, X, Y)
        Gp = nncore.input_gradient_batch(net, Vp, Y)
        acc.gradient_evals += 2 * X.shape[0]
        fv = nncore.forward_batch(net, X)
        loss_v = (Y - fv) ** 2

        for kind, rule in rules:
            D = rule(G, Gp, mask)
            absd = np.where(D != 0.0, np.abs(D), np.inf)
            order = np.argsort(absd, axis=1, kind="stable")
            nnz = np.count_nonzero(D, axis=1)
            for i in range(steps):
                rows = np.flatnonzero(nnz > i)
                if rows.size == 0:
                    break
                cols = order[rows, i]
                VP = X[rows].copy()
                r = np.arange(rows.size)
                VP[r, cols] = np.clip(VP[r, cols] + cfg.step_p * D[rows, cols], 0.0, 1.0)
                dot = G[rows, cols] * (VP[r, cols] - X[rows, cols])
                f_vp = nncore.forward_batch(net, VP)
                YP = perturb.ground_truth_batch(loss_v[rows], dot, f_vp, Y[rows])
                acc.add(VP, np.clip(YP, 0.0, 1.0), PHASE_LOCAL, kind, ids[rows], i)
    return acc.result(schema.n_features)


def robustfair(
    net: nncore.DenseNetwork,
    seeds: Sequence[Instance],
    schema: DatasetSchema,
    cfg: SearchConfig,
) -> GenerationResult:
    """Both phases; the evaluation set is the union of their emissions."""
    rg = global_generation(net, seeds, schema, cfg)
    rl = local_generation(net, rg, schema, cfg)
    return GenerationResult.concat([rg, rl])


def fgsm(
    net: nncore.DenseNetwork,
    samples: Sequence[Instance],
    schema: DatasetSchema,
    eps: float,
) -> GenerationResult:
    """One gradient-sign step per sample; original labels are kept, and
    sensitive coordinates stay untouched so counterpart semantics hold."""
    if eps < 0:
        raise ConfigError("eps must be >= 0")
    if len(samples) == 0:
        raise ConfigError("fgsm needs at least one sample")
    X, Y = instances_to_arrays(samples)
    G = nncore.input_gradient_batch(net, X, Y)
    D = np.sign(G)
    D[:, schema.sensitive_indices] = 0.0
    VP = clip_to_domain(X + eps * D)
    acc = _Accumulator()
    acc.gradient_evals = X.shape[0]
    acc.add(VP, Y, PHASE_FGSM, perturb.LOSS_ASCENT, np.arange(X.shape[0]), 0, ~D.any(axis=1))
    return acc.result(schema.n_features)


def pgd(
    net: nncore.DenseNetwork,
    seeds: Sequence[Instance],
    schema: DatasetSchema,
    cfg: SearchConfig,
) -> GenerationResult:
    """Iterated sign steps projected onto the L-inf ball around each seed;
    every iterate is emitted so the budget counts per step."""
    if len(seeds) == 0:
        raise ConfigError("pgd needs at least one seed")
    X0, Y = instances_to_arrays(seeds)
    V = X0.copy()
    lo = np.clip(X0 - cfg.pgd_eps, 0.0, 1.0)
    hi = np.clip(X0 + cfg.pgd_eps, 0.0, 1.0)
    ids = np.arange(X0.shape[0], dtype=np.int64)
    acc = _Accumulator()
    for step in range(cfg.pgd_steps):
        G = nncore.input_gradient_batch(net, V, Y)
        acc.gradient_evals += V.shape[0]
        S = np.sign(G)
        S[:, schema.sensitive_indices] = 0.0
        V = np.clip(V + cfg.pgd_alpha * S, lo, hi)
        acc.add(V.copy(), Y, PHASE_PGD, perturb.LOSS_ASCENT, ids, step)
    return acc.result(schema.n_features)
