"""Deterministic benchmark-table generators with analytic densities.

Three kinds: a 2-D Gaussian mixture (numeric), a Markov chain over named
categorical features, and a two-feature parent/child toy. Each generator is
bit-reproducible given its seed and knows its own exact log-density, which
makes generated tables usable as ground-truth oracles. The discrete kinds
also expose their full joint distribution for total-variation checks.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, SchemaMismatchError
from .seeding import rng as derive_rng
from .tables import Feature, FeatureKind, Schema, Table

_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_probs(name: str, probs) -> None:
    arr = np.asarray(probs, dtype=np.float64)
    if (arr < 0).any():
        raise InvalidSpecError(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise InvalidSpecError(f"{name} must sum to 1, got {arr.sum()}")


@dataclass(frozen=True)
class Gmm2D:
    weights: tuple[float, ...]
    means: tuple[tuple[float, float], ...]
    covariances: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    feature_x: str = "X"
    feature_y: str = "Y"
    decimals: int = 2

    def validate(self) -> None:
        k = len(self.weights)
        if k == 0 or len(self.means) != k or len(self.covariances) != k:
            raise InvalidSpecError("component lists must be non-empty and aligned")
        _check_probs("mixture weights", self.weights)
        for cov in self.covariances:
            arr = np.asarray(cov, dtype=np.float64)
            if arr.shape != (2, 2) or abs(arr[0, 1] - arr[1, 0]) > 1e-12:
                raise InvalidSpecError("covariances must be symmetric 2x2")
            try:
                np.linalg.cholesky(arr)
            except np.linalg.LinAlgError:
                raise InvalidSpecError(
                    "covariances must be positive definite"
                ) from None

    def schema(self) -> Schema:
        return Schema(
            features=(
                Feature(self.feature_x, FeatureKind.NUMERIC),
                Feature(self.feature_y, FeatureKind.NUMERIC),
            )
        )

    def log_density(self, x: np.ndarray) -> np.ndarray:
        parts = []
        for w, mean, cov in zip(self.weights, self.means, self.covariances):
            arr = np.asarray(cov, dtype=np.float64)
            chol = np.linalg.cholesky(arr)
            diff = x - np.asarray(mean)
            sol = np.linalg.solve(chol, diff.T)
            maha = (sol**2).sum(axis=0)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            parts.append(np.log(w) - 0.5 * (2 * _LOG_2PI + logdet + maha))
        stacked = np.stack(parts)
        peak = stacked.max(axis=0)
        return peak + np.log(np.exp(stacked - peak).sum(axis=0))


@dataclass(frozen=True)
class MarkovCategorical:
    features: tuple[str, ...]
    supports: tuple[tuple[str, ...], ...]
    initial: tuple[float, ...]
    transitions: tuple[tuple[tuple[float, ...], ...], ...]

    def validate(self) -> None:
        if len(self.features) < 2:
            raise InvalidSpecError("markov chain needs at least two features")
        if len(set(self.features)) != len(self.features):
            raise InvalidSpecError("feature names must be distinct")
        if len(self.supports) != len(self.features):
            raise InvalidSpecError("one support per feature required")
        for support in self.supports:
            if not support or len(set(support)) != len(support):
                raise InvalidSpecError("supports must be non-empty and distinct")
        if len(self.initial) != len(self.supports[0]):
            raise InvalidSpecError("initial distribution size mismatch")
        _check_probs("initial distribution", self.initial)
        if len(self.transitions) != len(self.features) - 1:
            raise InvalidSpecError("one transition table per adjacent pair")
        for i, table in enumerate(self.transitions):
            if len(table) != len(self.supports[i]):
                raise InvalidSpecError(f"transition {i} row count mismatch")
            for row in table:
                if len(row) != len(self.supports[i + 1]):
                    raise InvalidSpecError(f"transition {i} column count mismatch")
                _check_probs(f"transition {i} row", row)

    def schema(self) -> Schema:
        return Schema(
            features=tuple(
                Feature(name, FeatureKind.CATEGORICAL) for name in self.features
            ),
            categorical_support={
                name: frozenset(support)
                for name, support in zip(self.features, self.supports)
            },
        )


@dataclass(frozen=True)
class DependentToy:
    parent: str
    child: str
    parent_values: tuple[str, ...]
    parent_probs: tuple[float, ...]
    rules: dict[str, dict[str, float]]

    def validate(self) -> None:
        if self.parent == self.child:
            raise InvalidSpecError("parent and child must differ")
        if len(self.parent_values) != len(self.parent_probs):
            raise InvalidSpecError("parent values/probs size mismatch")
        if len(set(self.parent_values)) != len(self.parent_values):
            raise InvalidSpecError("parent values must be distinct")
        _check_probs("parent distribution", self.parent_probs)
        if set(self.rules) != set(self.parent_values):
            raise InvalidSpecError("rules must cover exactly the parent values")
        for value, dist in self.rules.items():
            if not dist:
                raise InvalidSpecError(f"rule for {value!r} is empty")
            _check_probs(f"rule for {value!r}", list(dist.values()))

    def child_values(self) -> tuple[str, ...]:
        seen: list[str] = []
        for dist in self.rules.values():
            for v in dist:
                if v not in seen:
                    seen.append(v)
        return tuple(sorted(seen))

    def schema(self) -> Schema:
        return Schema(
            features=(
                Feature(self.parent, FeatureKind.CATEGORICAL),
                Feature(self.child, FeatureKind.CATEGORICAL),
            ),
            categorical_support={
                self.parent: frozenset(self.parent_values),
                self.child: frozenset(self.child_values()),
            },
        )


Kind = Gmm2D | MarkovCategorical | DependentToy


@dataclass(frozen=True)
class GeneratorSpec:
    kind: Kind
    n_rows: int
    seed: int = 0

    def validate(self) -> None:
        if self.n_rows < 1:
            raise InvalidSpecError("n_rows must be >= 1")
        self.kind.validate()

    def to_json(self) -> dict:
        base = {"n_rows": self.n_rows, "seed": self.seed}
        k = self.kind
        if isinstance(k, Gmm2D):
            base["kind"] = "gmm2d"
            base["components"] = [
                {"weight": w, "mean": list(m), "cov": [list(r) for r in c]}
                for w, m, c in zip(k.weights, k.means, k.covariances)
            ]
            base["features"] = [k.feature_x, k.feature_y]
            base["decimals"] = k.decimals
        elif isinstance(k, MarkovCategorical):
            base["kind"] = "markov_categorical"
            base["features"] = list(k.features)
            base["supports"] = [list(s) for s in k.supports]
            base["initial"] = list(k.initial)
            base["transitions"] = [
                [list(row) for row in table] for table in k.transitions
            ]
        else:
            base["kind"] = "dependent_toy"
            base["parent"] = k.parent
            base["child"] = k.child
            base["parent_values"] = list(k.parent_values)
            base["parent_probs"] = list(k.parent_probs)
            base["rules"] = {v: dict(d) for v, d in k.rules.items()}
        return base

    @classmethod
    def from_json(cls, data: dict) -> "GeneratorSpec":
        kind_name = data.get("kind")
        if kind_name == "gmm2d":
            comps = data["components"]
            names = data.get("features", ["X", "Y"])
            kind: Kind = Gmm2D(
                weights=tuple(c["weight"] for c in comps),
                means=tuple(tuple(c["mean"]) for c in comps),
                covariances=tuple(
                    tuple(tuple(row) for row in c["cov"]) for c in comps
                ),
                feature_x=names[0],
                feature_y=names[1],
                decimals=int(data.get("decimals", 2)),
            )
        elif kind_name == "markov_categorical":
            kind = MarkovCategorical(
                features=tuple(data["features"]),
                supports=tuple(tuple(s) for s in data["supports"]),
                initial=tuple(data["initial"]),
                transitions=tuple(
                    tuple(tuple(row) for row in table)
                    for table in data["transitions"]
                ),
            )
        elif kind_name == "dependent_toy":
            kind = DependentToy(
                parent=data["parent"],
                child=data["child"],
                parent_values=tuple(data["parent_values"]),
                parent_probs=tuple(data["parent_probs"]),
                rules={v: dict(d) for v, d in data["rules"].items()},
            )
        else:
            raise InvalidSpecError(f"unknown generator kind {kind_name!r}")
        spec = cls(kind=kind, n_rows=int(data["n_rows"]), seed=int(data.get("seed", 0)))
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidSpecError(f"bad generator JSON: {exc}") from exc
        return cls.from_json(data)


def generate(spec: GeneratorSpec) -> Table:
    spec.validate()
    k = spec.kind
    if isinstance(k, Gmm2D):
        rng = derive_rng(spec.seed, "bench-gmm")
        comps = rng.choice(len(k.weights), size=spec.n_rows, p=np.asarray(k.weights))
        points = np.empty((spec.n_rows, 2))
        for j in range(len(k.weights)):
            mask = comps == j
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            chol = np.linalg.cholesky(np.asarray(k.covariances[j], dtype=np.float64))
            points[mask] = np.asarray(k.means[j]) + rng.standard_normal((cnt, 2)) @ chol.T
        rows = tuple(
            (f"{x:.{k.decimals}f}", f"{y:.{k.decimals}f}") for x, y in points
        )
    elif isinstance(k, MarkovCategorical):
        rng = derive_rng(spec.seed, "bench-markov")
        n = spec.n_rows
        tables = [np.asarray(t, dtype=np.float64) for t in k.transitions]
        states = rng.choice(len(k.initial), size=n, p=np.asarray(k.initial))
        columns = [np.array(k.supports[0], dtype=object)[states]]
        for i, table in enumerate(tables):
            nxt = np.empty(n, dtype=np.int64)
            for s in range(table.shape[0]):
                mask = states == s
                cnt = int(mask.sum())
                if cnt:
                    nxt[mask] = rng.choice(table.shape[1], size=cnt, p=table[s])
            states = nxt
            columns.append(np.array(k.supports[i + 1], dtype=object)[states])
        rows = tuple(zip(*columns))
    else:
        rng = derive_rng(spec.seed, "bench-toy")
        n = spec.n_rows
        parents = rng.choice(
            len(k.parent_values), size=n, p=np.asarray(k.parent_probs)
        )
        children = np.empty(n, dtype=object)
        for i, pv in enumerate(k.parent_values):
            mask = parents == i
            cnt = int(mask.sum())
            if cnt:
                dist = k.rules[pv]
                values = np.array(list(dist), dtype=object)
                probs = np.asarray(list(dist.values()), dtype=np.float64)
                children[mask] = values[rng.choice(len(values), size=cnt, p=probs)]
        parent_col = np.array(k.parent_values, dtype=object)[parents]
        rows = tuple(zip(parent_col, children))
    return Table(schema=k.schema(), rows=rows)


def _check_table_schema(spec: GeneratorSpec, table: Table) -> None:
    want = [(f.name, f.kind) for f in spec.kind.schema().features]
    got = [(f.name, f.kind) for f in table.schema.features]
    if want != got:
        raise SchemaMismatchError(f"table features {got} do not match spec {want}")


def true_loglik(spec: GeneratorSpec, table: Table) -> float:
    """Exact mean log-density of the rows under the generator's distribution."""
    spec.validate()
    _check_table_schema(spec, table)
    k = spec.kind
    if isinstance(k, Gmm2D):
        x = np.stack(
            [table.numeric_column(k.feature_x), table.numeric_column(k.feature_y)],
            axis=1,
        )
        return float(k.log_density(x).mean())
    total = 0.0
    if isinstance(k, MarkovCategorical):
        index = [{v: i for i, v in enumerate(s)} for s in k.supports]
        tables = [np.asarray(t, dtype=np.float64) for t in k.transitions]
        for row in table.rows:
            try:
                state = index[0][row[0]]
            except KeyError:
                raise SchemaMismatchError(f"value {row[0]!r} outside spec support") from None
            p = np.log(k.initial[state])
            for i, t in enumerate(tables):
                try:
                    nxt = index[i + 1][row[i + 1]]
                except KeyError:
                    raise SchemaMismatchError(
                        f"value {row[i + 1]!r} outside spec support"
                    ) from None
                p += np.log(t[state, nxt])
                state = nxt
            total += p
        return float(total / len(table.rows))
    parent_index = {v: i for i, v in enumerate(k.parent_values)}
    for pv, cv in table.rows:
        if pv not in parent_index or cv not in k.rules[pv]:
            raise SchemaMismatchError(f"row ({pv!r}, {cv!r}) outside spec support")
        total += np.log(k.parent_probs[parent_index[pv]]) + np.log(k.rules[pv][cv])
    return float(total / len(table.rows))


def exact_joint(spec: GeneratorSpec) -> dict[tuple[str, ...], float]:
    """Full joint distribution of a discrete generator, row tuple -> prob."""
    spec.validate()
    k = spec.kind
    if isinstance(k, Gmm2D):
        raise InvalidSpecError("exact_joint is defined for discrete kinds only")
    out: dict[tuple[str, ...], float] = {}
    if isinstance(k, MarkovCategorical):
        tables = [np.asarray(t, dtype=np.float64) for t in k.transitions]
        for combo in itertools.product(*(range(len(s)) for s in k.supports)):
            p = k.initial[combo[0]]
            for i, t in enumerate(tables):
                p *= t[combo[i], combo[i + 1]]
            if p > 0:
                out[tuple(k.supports[i][j] for i, j in enumerate(combo))] = float(p)
        return out
    for i, pv in enumerate(k.parent_values):
        for cv, q in k.rules[pv].items():
            p = k.parent_probs[i] * q
            if p > 0:
                out[(pv, cv)] = float(p)
    return out


def gmm_benchmark_spec(n_rows: int = 6000, seed: int = 0) -> GeneratorSpec:
    """Bundled 2-component 2-D mixture benchmark: 6000 rows, 2 features."""
    return GeneratorSpec(
        kind=Gmm2D(
            weights=(0.5, 0.5),
            means=((-2.0, -2.0), (2.0, 2.0)),
            covariances=(
                ((1.0, 0.3), (0.3, 1.0)),
                ((1.0, -0.2), (-0.2, 1.0)),
            ),
        ),
        n_rows=n_rows,
        seed=seed,
    )


def markov_benchmark_spec(n_rows: int = 5000, seed: int = 0) -> GeneratorSpec:
    """Bundled 3-feature categorical chain with non-trivial dependence."""
    return GeneratorSpec(
        kind=MarkovCategorical(
            features=("Shape", "Color", "Size"),
            supports=(
                ("circle", "square", "star"),
                ("red", "green", "blue"),
                ("small", "large"),
            ),
            initial=(0.5, 0.3, 0.2),
            transitions=(
                (
                    (0.7, 0.2, 0.1),
                    (0.1, 0.6, 0.3),
                    (0.25, 0.25, 0.5),
                ),
                (
                    (0.8, 0.2),
                    (0.35, 0.65),
                    (0.5, 0.5),
                ),
            ),
        ),
        n_rows=n_rows,
        seed=seed,
    )


def toy_benchmark_spec(n_rows: int = 1000, seed: int = 0) -> GeneratorSpec:
    """Parent/child rule table with a deterministic branch."""
    return GeneratorSpec(
        kind=DependentToy(
            parent="Weather",
            child="Ground",
            parent_values=("rain", "sun"),
            parent_probs=(0.4, 0.6),
            rules={
                "rain": {"wet": 1.0},
                "sun": {"dry": 0.8, "wet": 0.2},
            },
        ),
        n_rows=n_rows,
        seed=seed,
    )
