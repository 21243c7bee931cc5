"""Dataset schema, CSV ingestion, normalization, similar counterparts,
and K-Means seed selection.

Every attribute is either categorical (explicit value list) or an integer
range; both are ordinally encoded and min-max normalized to [0,1], so each
attribute occupies exactly one coordinate of the feature vector. Sensitive
attributes are enumerated jointly when building the similar sub-population
of an instance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericError, SchemaError

NONSENSITIVE = "nonsensitive"
SENSITIVE = "sensitive"
LABEL = "label"

DEFAULT_COUNTERPART_CAP = 256
KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


@dataclass(frozen=True)
class AttributeSpec:
    """One column: name, sensitivity kind, and a discrete value domain."""

    name: str
    kind: str
    values: tuple[str, ...] | None = None  # categorical domain, declared order
    lo: int | None = None  # integer range, inclusive
    hi: int | None = None

    def __post_init__(self):
        if self.kind not in (NONSENSITIVE, SENSITIVE, LABEL):
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if (self.values is None) == (self.lo is None or self.hi is None):
            raise SchemaError(
                f"attribute {self.name!r}: need either a value list or an integer range"
            )
        if self.values is not None:
            if len(self.values) < 1:
                raise SchemaError(f"attribute {self.name!r}: empty value list")
            if len(set(self.values)) != len(self.values):
                raise SchemaError(f"attribute {self.name!r}: duplicate values")
        else:
            if self.hi < self.lo:
                raise SchemaError(f"attribute {self.name!r}: hi < lo")

    @property
    def is_categorical(self) -> bool:
        return self.values is not None

    @property
    def size(self) -> int:
        """Number of domain members."""
        return len(self.values) if self.is_categorical else self.hi - self.lo + 1

    def encode(self, raw: str, row: int) -> float:
        """Raw CSV token to the ordinal code (not yet normalized)."""
        if self.is_categorical:
            try:
                return float(self.values.index(raw))
            except ValueError:
                raise DataError(
                    f"row {row}, column {self.name!r}: unknown value {raw!r}"
                ) from None
        try:
            val = float(raw)
        except ValueError:
            raise DataError(
                f"row {row}, column {self.name!r}: not a number: {raw!r}"
            ) from None
        if not (self.lo <= val <= self.hi):
            raise DataError(
                f"row {row}, column {self.name!r}: {raw} outside [{self.lo}, {self.hi}]"
            )
        return val - self.lo

    def normalize_code(self, code: float) -> float:
        """Ordinal code to [0,1]; single-member domains map to 0."""
        return code / (self.size - 1) if self.size > 1 else 0.0

    def decode_normalized(self, x: float) -> str:
        """Normalized coordinate back to the nearest raw domain value."""
        idx = int(round(float(np.clip(x, 0.0, 1.0)) * (self.size - 1)))
        if self.is_categorical:
            return self.values[idx]
        return str(self.lo + idx)

    def normalized_domain(self) -> np.ndarray:
        """All domain members as normalized coordinates, declared order."""
        if self.size == 1:
            return np.zeros(1)
        return np.arange(self.size, dtype=np.float64) / (self.size - 1)


class DatasetSchema:
    """Ordered attribute list; exactly one label attribute."""

    def __init__(self, attributes: Sequence[AttributeSpec], name: str = ""):
        self.name = name
        self.attributes = list(attributes)
        labels = [a for a in self.attributes if a.kind == LABEL]
        if len(labels) != 1:
            raise SchemaError(f"schema needs exactly one label attribute, found {len(labels)}")
        self.label_attribute = labels[0]
        if self.label_attribute.size != 2:
            raise SchemaError("label attribute must have exactly two domain values")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")
        # Feature vector layout: all non-label attributes in declared order.
        self.feature_attributes = [a for a in self.attributes if a.kind != LABEL]
        self.sensitive_indices = np.array(
            [i for i, a in enumerate(self.feature_attributes) if a.kind == SENSITIVE],
            dtype=np.intp,
        )
        self.nonsensitive_indices = np.array(
            [i for i, a in enumerate(self.feature_attributes) if a.kind == NONSENSITIVE],
            dtype=np.intp,
        )

    @property
    def n_features(self) -> int:
        return len(self.feature_attributes)

    @property
    def sensitive_attributes(self) -> list[AttributeSpec]:
        return [self.feature_attributes[i] for i in self.sensitive_indices]

    @property
    def sensitive_product_size(self) -> int:
        return math.prod(a.size for a in self.sensitive_attributes) if len(self.sensitive_indices) else 0

    def sensitive_mask(self) -> np.ndarray:
        """Boolean mask over feature indices, True at sensitive coordinates."""
        mask = np.zeros(self.n_features, dtype=bool)
        mask[self.sensitive_indices] = True
        return mask

    def bounds(self) -> list[tuple[float, float]]:
        """Per-attribute (min, max) used for min-max normalization."""
        out = []
        for a in self.feature_attributes:
            if a.is_categorical:
                out.append((0.0, float(a.size - 1)))
            else:
                out.append((float(a.lo), float(a.hi)))
        return out

    def sensitive_grid(self) -> np.ndarray:
        """Full Cartesian product of normalized sensitive domains.

        Shape (product_size, n_sensitive); the first sensitive attribute
        varies slowest. Row order defines counterpart enumeration order.
        """
        if len(self.sensitive_indices) == 0:
            raise ConfigError("schema declares no sensitive attributes")
        domains = [a.normalized_domain() for a in self.sensitive_attributes]
        mesh = np.meshgrid(*domains, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def denormalize_rows(self, X: np.ndarray) -> list[list[str]]:
        """Normalized feature rows back to raw tokens, rounded to the domain."""
        return [
            [a.decode_normalized(x) for a, x in zip(self.feature_attributes, row)]
            for row in np.atleast_2d(X)
        ]

    def to_dict(self) -> dict:
        attrs = []
        for a in self.attributes:
            d = {"name": a.name, "kind": a.kind}
            if a.is_categorical:
                d["values"] = list(a.values)
            else:
                d["min"] = a.lo
                d["max"] = a.hi
            attrs.append(d)
        return {"name": self.name, "attributes": attrs}

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        attrs = []
        for d in doc.get("attributes", []):
            if "values" in d:
                attrs.append(AttributeSpec(d["name"], d["kind"], values=tuple(d["values"])))
            else:
                attrs.append(AttributeSpec(d["name"], d["kind"], lo=int(d["min"]), hi=int(d["max"])))
        return cls(attrs, name=doc.get("name", ""))


def load_schema(path) -> DatasetSchema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    return DatasetSchema.from_dict(doc)


def builtin_schema(name: str) -> DatasetSchema:
    """One of the schemas shipped with the package (adult, german_credit,
    bank_marketing, compas)."""
    from importlib.resources import files

    res = files("fairsearch").joinpath(f"schemas/{name}.json")
    if not res.is_file():
        raise SchemaError(f"no built-in schema named {name!r}")
    return DatasetSchema.from_dict(json.loads(res.read_text(encoding="utf-8")))


def save_schema(schema: DatasetSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class Instance:
    """Normalized feature vector with its ground-truth label."""

    features: np.ndarray
    label: float


@dataclass(frozen=True)
class Provenance:
    phase: str  # "global" | "local" | "fgsm" | "pgd"
    direction: str  # "FF" | "TB" | "FB" | "loss_ascent"
    seed_id: int
    iteration: int
    degenerate: bool = False


@dataclass
class GeneratedInstance:
    """A perturbed vector with its approximated ground truth."""

    features: np.ndarray
    approx_label: float
    provenance: Provenance


def load_dataset(path, schema: DatasetSchema) -> list[Instance]:
    """Read a CSV with a header row into normalized instances.

    The header must list the schema's attribute names in schema order.
    Categorical attributes are encoded by their position in the declared
    value list; everything is min-max normalized to [0,1]; labels end up
    in {0,1} by domain position.
    """
    expected = [a.name for a in schema.attributes]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected:
            missing = set(expected) - set(header)
            if missing:
                raise SchemaError(f"{path}: missing columns {sorted(missing)}")
            raise SchemaError(
                f"{path}: header {header} does not match schema order {expected}"
            )
        label_pos = schema.attributes.index(schema.label_attribute)
        instances = []
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise DataError(f"row {row_idx}: expected {len(expected)} fields, got {len(row)}")
            feats = np.empty(schema.n_features)
            j = 0
            label = 0.0
            for col, (attr, raw) in enumerate(zip(schema.attributes, row)):
                code = attr.encode(raw.strip(), row_idx)
                if col == label_pos:
                    label = float(code)
                else:
                    feats[j] = attr.normalize_code(code)
                    j += 1
            instances.append(Instance(feats, label))
    return instances


def instances_to_arrays(instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack instances into (features, labels) arrays."""
    X = np.stack([inst.features for inst in instances]).astype(np.float64)
    y = np.array([inst.label for inst in instances], dtype=np.float64)
    return X, y


def _sensitive_member_indices(v: np.ndarray, schema: DatasetSchema) -> list[int]:
    idxs = []
    for attr, pos in zip(schema.sensitive_attributes, schema.sensitive_indices):
        idxs.append(int(round(float(v[pos]) * (attr.size - 1))) if attr.size > 1 else 0)
    return idxs


def similar_counterparts(
    v: np.ndarray,
    schema: DatasetSchema,
    cap: int = DEFAULT_COUNTERPART_CAP,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Similar sub-population of v: same non-sensitive coordinates, sensitive
    coordinates ranging over the joint domain product.

    Returns a (m, n_features) array with m = min(cap, product size). When the
    full product fits within cap it is enumerated in grid order (v included
    at its own combination); otherwise the result is v followed by cap-1
    distinct combinations sampled without replacement, deterministic per rng.
    """
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    if len(schema.sensitive_indices) == 0:
        raise ConfigError("schema declares no sensitive attributes")
    v = np.asarray(v, dtype=np.float64)
    sizes = [a.size for a in schema.sensitive_attributes]
    total = math.prod(sizes)
    sens_idx = schema.sensitive_indices

    if total <= cap:
        grid = schema.sensitive_grid()
        out = np.repeat(v[None, :], grid.shape[0], axis=0)
        out[:, sens_idx] = grid
        return out

    rng = rng if rng is not None else np.random.default_rng(0)
    member = _sensitive_member_indices(v, schema)
    own_flat = 0
    for size, m in zip(sizes, member):
        own_flat = own_flat * size + m
    # Sample flat ranks from the product, skipping v's own combination.
    picks = rng.choice(total - 1, size=cap - 1, replace=False)
    picks = np.where(picks >= own_flat, picks + 1, picks)
    out = np.repeat(v[None, :], cap, axis=0)
    for row, flat in zip(out[1:], picks):
        rest = int(flat)
        for size, attr, pos in zip(
            reversed(sizes), reversed(schema.sensitive_attributes), reversed(sens_idx)
        ):
            rest, m = divmod(rest, size)
            row[pos] = attr.normalized_domain()[m]
    return out


def max_diff_counterpart(net, v: np.ndarray, counterparts: np.ndarray) -> np.ndarray:
    """Counterpart whose prediction differs most from f(v); ties take the
    lowest enumeration index."""
    from . import nncore

    counterparts = np.atleast_2d(np.asarray(counterparts, dtype=np.float64))
    if counterparts.shape[0] == 0:
        raise ValueError("counterpart list is empty")
    fv = nncore.forward(net, v)
    preds = nncore.forward_batch(net, counterparts)
    return counterparts[int(np.argmax(np.abs(preds - fv)))]


def clip_to_domain(v: np.ndarray) -> np.ndarray:
    """Clamp every coordinate to [0,1]; rejects NaN input."""
    v = np.asarray(v, dtype=np.float64)
    if np.isnan(v).any():
        raise NumericError("clip_to_domain: input contains NaN")
    return np.clip(v, 0.0, 1.0)


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd's K-Means; returns the assignment vector."""
    n = X.shape[0]
    centroids = X[rng.choice(n, size=k, replace=False)].copy()
    assign = np.zeros(n, dtype=np.intp)
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        shift = 0.0
        for c in range(k):
            members = X[assign == c]
            if len(members) == 0:
                # Re-seed a dead centroid from the farthest point.
                far = int(d2[np.arange(n), assign].argmax())
                new_c = X[far]
            else:
                new_c = members.mean(axis=0)
            shift = max(shift, float(np.linalg.norm(new_c - centroids[c])))
            centroids[c] = new_c
        if shift < KMEANS_TOL:
            break
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def kmeans_seeds(
    data: Sequence[Instance],
    k: int,
    n_seeds: int,
    rng: np.random.Generator,
) -> list[Instance]:
    """Cluster the data with K-Means and sample seeds uniformly across
    clusters: floor(n_seeds/k) each, remainder from the largest clusters."""
    n = len(data)
    if k < 1 or k > n:
        raise ConfigError(f"k={k} must be in [1, {n}]")
    if not (0 < n_seeds <= n):
        raise ConfigError(f"n_seeds={n_seeds} must be in [1, {n}]")
    X, _ = instances_to_arrays(data)
    assign = _lloyd(X, k, rng)

    members = [np.flatnonzero(assign == c) for c in range(k)]
    quotas = [n_seeds // k] * k
    remainder = n_seeds - sum(quotas)
    by_size = sorted(range(k), key=lambda c: (-len(members[c]), c))
    for c in by_size[:remainder]:
        quotas[c] += 1
    # Clusters smaller than their quota hand the deficit to the largest
    # clusters with spare capacity.
    deficit = 0
    for c in range(k):
        if quotas[c] > len(members[c]):
            deficit += quotas[c] - len(members[c])
            quotas[c] = len(members[c])
    while deficit > 0:
        spare = [(len(members[c]) - quotas[c], c) for c in range(k)]
        spare = [s for s in spare if s[0] > 0]
        if not spare:
            raise ConfigError("cannot place all seeds")  # unreachable: n_seeds <= n
        spare.sort(key=lambda t: (-t[0], t[1]))
        take = min(deficit, spare[0][0])
        quotas[spare[0][1]] += take
        deficit -= take

    chosen: list[int] = []
    for c in range(k):
        if quotas[c] == 0:
            continue
        picks = rng.choice(members[c], size=quotas[c], replace=False)
        chosen.extend(int(i) for i in picks)
    chosen.sort()
    return [data[i] for i in chosen]
