"""Fairness confusion matrix: classification of instances into TF/TB/FF/FB
and the tallies behind the evaluation reports.

An instance is accurate when its predicted label equals its ground truth,
and fair when every similar counterpart receives the instance's own
predicted label. The four categories cross those two axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import nncore
from .data import DEFAULT_COUNTERPART_CAP, DatasetSchema, similar_counterparts
from .errors import ConfigError

TF = "TF"
TB = "TB"
FF = "FF"
FB = "FB"
CATEGORIES = (TF, TB, FF, FB)
_CODE = {c: i for i, c in enumerate(CATEGORIES)}

# Column order of the statistics tables.
REPORT_COLUMNS = ("N_F", "N_B", "N_F|B", "N_TF", "N_TB", "N_FF", "N_FB", "SUM")


@dataclass(frozen=True)
class AccurateFairnessCriterion:
    """Accurate fairness with indicator distances.

    Label distance is 0/1 disagreement; input distance is the 0/1 "inputs
    differ" indicator. With the default K=0 the criterion demands that the
    instance and all counterparts are predicted exactly at the ground truth.
    """

    fairness_budget: float = 0.0  # K

    def __post_init__(self):
        if self.fairness_budget < 0:
            raise ConfigError("fairness budget K must be >= 0")

    def satisfied(self, y: int, own_label: int, counterpart_labels: Sequence[int]) -> bool:
        if own_label != y:  # the instance itself is at input distance 0
            return False
        if self.fairness_budget >= 1.0:  # indicator distances top out at 1
            return True
        return all(int(lbl) == y for lbl in counterpart_labels)


def classify(
    net: nncore.DenseNetwork,
    v: np.ndarray,
    y: int,
    counterparts: np.ndarray,
    threshold: float = 0.5,
) -> str:
    """Place one instance in the fairness confusion matrix."""
    counterparts = np.atleast_2d(np.asarray(counterparts, dtype=np.float64))
    if counterparts.shape[0] == 0:
        raise ValueError("counterpart list is empty")
    own = nncore.predict_label(net, v, threshold)
    cp = nncore.predict_labels(net, counterparts, threshold)
    accurate = own == int(y)
    fair = bool((cp == own).all())
    if accurate:
        return TF if fair else TB
    return FF if fair else FB


def classify_batch(
    net: nncore.DenseNetwork,
    X: np.ndarray,
    y: np.ndarray,
    schema: DatasetSchema,
    cap: int = DEFAULT_COUNTERPART_CAP,
    threshold: float = 0.5,
    rng: np.random.Generator | None = None,
    chunk: int = 65536,
) -> np.ndarray:
    """Category codes (indices into CATEGORIES) for a batch of instances.

    When the joint sensitive domain fits within `cap`, counterparts are the
    full product grid and the sweep short-circuits rows already known to be
    biased; the outcome is identical to exhaustive evaluation. Larger
    products fall back to per-row sampled counterparts (seeded by rng).
    """
    if not (0.0 < threshold < 1.0):
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    codes = np.empty(n, dtype=np.uint8)
    if n == 0:
        return codes

    own = nncore.forward_batch(net, X) >= threshold
    accurate = own == (np.asarray(y, dtype=np.float64) >= 0.5)

    if schema.sensitive_product_size <= cap:
        fair = _fair_mask_grid(net, X, own, schema, threshold, chunk)
    else:
        fair = np.empty(n, dtype=bool)
        base = np.random.SeedSequence(rng.integers(2**63) if rng is not None else 0)
        seeds = base.spawn(n)
        for i in range(n):
            cps = similar_counterparts(X[i], schema, cap, np.random.default_rng(seeds[i]))
            labels = nncore.forward_batch(net, cps) >= threshold
            fair[i] = bool((labels == own[i]).all())

    codes[accurate & fair] = _CODE[TF]
    codes[accurate & ~fair] = _CODE[TB]
    codes[~accurate & fair] = _CODE[FF]
    codes[~accurate & ~fair] = _CODE[FB]
    return codes


def _fair_mask_grid(net, X, own, schema, threshold, chunk) -> np.ndarray:
    """Fairness flags against the full sensitive grid, short-circuiting rows
    once any counterpart disagrees (order cannot change the outcome)."""
    grid = schema.sensitive_grid()
    s_idx = schema.sensitive_indices
    ns_idx = schema.nonsensitive_indices
    first = net.layers[0]
    w_ns = first.weights[:, ns_idx]
    w_s = first.weights[:, s_idx]
    grid_term = grid @ w_s.T  # (m, h1)
    # Visit extreme combinations first; predictions flip there soonest.
    visit = np.argsort(-np.abs(grid - 0.5).max(axis=1), kind="stable")

    n = X.shape[0]
    fair = np.ones(n, dtype=bool)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        Xc = X[start:stop]
        own_c = own[start:stop]
        z_ns = Xc[:, ns_idx] @ w_ns.T + first.bias
        active = np.arange(stop - start)
        for j in visit:
            z1 = z_ns[active] + grid_term[j]
            labels = nncore.forward_from_preact(net, z1) >= threshold
            agree = labels == own_c[active]
            if not agree.all():
                fair[start + active[~agree]] = False
                active = active[agree]
                if active.size == 0:
                    break
    return fair


@dataclass
class ConfusionReport:
    """Counts and rates over the fairness confusion matrix."""

    n_tf: int = 0
    n_tb: int = 0
    n_ff: int = 0
    n_fb: int = 0

    @property
    def n_false(self) -> int:
        return self.n_ff + self.n_fb

    @property
    def n_biased(self) -> int:
        return self.n_tb + self.n_fb

    @property
    def n_false_or_biased(self) -> int:
        return self.n_tb + self.n_ff + self.n_fb

    @property
    def total(self) -> int:
        return self.n_tf + self.n_tb + self.n_ff + self.n_fb

    @property
    def has_rates(self) -> bool:
        """False for an empty tally; rates are then reported as null, not NaN."""
        return self.total > 0

    def _rate(self, count: int) -> float:
        return count / self.total if self.total else 0.0

    @property
    def r_tf(self) -> float:
        return self._rate(self.n_tf)

    @property
    def r_tb(self) -> float:
        return self._rate(self.n_tb)

    @property
    def r_ff(self) -> float:
        return self._rate(self.n_ff)

    @property
    def r_fb(self) -> float:
        return self._rate(self.n_fb)

    @property
    def acc(self) -> float:
        return self._rate(self.n_tf + self.n_tb)

    @property
    def individual_fairness(self) -> float:
        return self._rate(self.n_tf + self.n_ff)

    def counts_row(self) -> list[int]:
        """Counts in REPORT_COLUMNS order."""
        return [
            self.n_false,
            self.n_biased,
            self.n_false_or_biased,
            self.n_tf,
            self.n_tb,
            self.n_ff,
            self.n_fb,
            self.total,
        ]

    def to_dict(self) -> dict:
        doc = dict(zip(REPORT_COLUMNS, self.counts_row()))
        if self.has_rates:
            doc.update(
                ACC=self.acc,
                IF=self.individual_fairness,
                R_TF=self.r_tf,
                R_TB=self.r_tb,
                R_FF=self.r_ff,
                R_FB=self.r_fb,
            )
        else:
            doc.update(ACC=None, IF=None, R_TF=None, R_TB=None, R_FF=None, R_FB=None)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ConfusionReport":
        return cls(n_tf=doc["N_TF"], n_tb=doc["N_TB"], n_ff=doc["N_FF"], n_fb=doc["N_FB"])


def tally(records: Iterable[str]) -> ConfusionReport:
    """Fold categories into a report; counts are additive across shards."""
    counts = {c: 0 for c in CATEGORIES}
    for cat in records:
        counts[cat] += 1
    return ConfusionReport(counts[TF], counts[TB], counts[FF], counts[FB])


def tally_codes(codes: np.ndarray) -> ConfusionReport:
    counts = np.bincount(np.asarray(codes, dtype=np.intp), minlength=4)
    return ConfusionReport(*(int(c) for c in counts[:4]))


def merge(reports: Iterable[ConfusionReport]) -> ConfusionReport:
    out = ConfusionReport()
    for r in reports:
        out.n_tf += r.n_tf
        out.n_tb += r.n_tb
        out.n_ff += r.n_ff
        out.n_fb += r.n_fb
    return out
