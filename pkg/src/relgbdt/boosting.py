"""Relational gradient boosting.

Each boosting iteration runs a two-pass cascade over the schedule:

* forward pass (parents before children): every node fits a tree on its own
  propositional columns; what that tree fails to explain (pseudo response
  minus prediction) is averaged onto the referenced child rows and becomes
  the child's pseudo response;
* backward pass (children before parents): every node is refit on its full
  input block, whose attention columns are computed from the children's
  backward-tree predictions.

The root's backward tree is the iteration's weak model. Pseudo responses are
raw loss gradients, so the ensemble update subtracts:
``F_i = F_{i-1} - shrinkage * h_i``.

Because of that sign, the attention blocks receive each child's contribution
``-h`` rather than ``h``. Hard attention then picks the child that pushes the
score up the most; the soft-attention ratio is unchanged by a common sign and
the score columns are simply negated.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .attention import FeatureBlock, assemble_b, prop_block
from .data import BINARY, MULTICLASS, REGRESSION, DatasetInstance, Schema, validate_instance
from .schedule import DEFAULT_COVER_COUNT, Schedule, build_schedule, topological_order
from .tree import RegressionTree, TreeConfig, constant_tree, train_tree

logger = logging.getLogger(__name__)

FORWARD, BACKWARD = 0, 1
PROB_CLAMP = 1e-6
MODEL_FORMAT = "relgbdt-model/1"


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Losses


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(F):
    F = np.asarray(F, dtype=np.float64)
    e = np.exp(F - F.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class Loss:
    """``mse`` (half squared error), ``binary_logloss`` or ``multiclass_softmax``.

    Binary scores are log-odds. Multiclass scores are one logit per class and
    labels are class positions ``0..n_classes-1``.
    """

    kind: str
    n_classes: int = 1

    def __post_init__(self):
        if self.kind not in ("mse", "binary_logloss", "multiclass_softmax"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == "multiclass_softmax" and self.n_classes < 2:
            raise ValueError("multiclass loss needs at least 2 classes")

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.kind == "multiclass_softmax" else 1

    def initial_prediction(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if len(y) == 0:
            raise TrainingError("need at least one labeled row")
        if self.kind == "mse":
            return np.array([float(np.mean(y))])
        if self.kind == "binary_logloss":
            p = float(np.clip(np.mean(y), PROB_CLAMP, 1 - PROB_CLAMP))
            return np.array([np.log(p / (1 - p))])
        prior = np.bincount(y.astype(np.int64), minlength=self.n_classes) / len(y)
        logp = np.log(np.clip(prior, PROB_CLAMP, None))
        return logp - logp.mean()

    def value(self, F: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-row loss."""
        if self.kind == "mse":
            return 0.5 * (F - y) ** 2
        if self.kind == "binary_logloss":
            return np.logaddexp(0.0, F) - y * F
        F = np.asarray(F)
        m = F.max(axis=1)
        lse = m + np.log(np.exp(F - m[:, None]).sum(axis=1))
        return lse - F[np.arange(len(y)), y.astype(np.int64)]

    def gradient(self, F: np.ndarray, y: np.ndarray) -> np.ndarray:
        """dL/dF, same shape as ``F``."""
        if self.kind == "mse":
            return F - y
        if self.kind == "binary_logloss":
            return _sigmoid(F) - y
        g = _softmax(F)
        g[np.arange(len(y)), y.astype(np.int64)] -= 1.0
        return g

    def transform(self, F: np.ndarray) -> np.ndarray:
        """Scores to outputs: raw, probability, or class probabilities."""
        if self.kind == "mse":
            return F
        if self.kind == "binary_logloss":
            return _sigmoid(F)
        return _softmax(F)


def loss_for_task(task: str, n_classes: int = 1) -> Loss:
    return {
        REGRESSION: Loss("mse"),
        BINARY: Loss("binary_logloss"),
        MULTICLASS: Loss("multiclass_softmax", n_classes),
    }[task]


LOSS_ALIASES = {"mse": "mse", "regression": "mse", "binary": "binary_logloss",
                "binary_logloss": "binary_logloss", "multiclass": "multiclass_softmax",
                "multiclass_softmax": "multiclass_softmax"}


def initial_prediction(loss: Loss, labels: np.ndarray) -> np.ndarray:
    return loss.initial_prediction(labels)


# ---------------------------------------------------------------------------
# Pseudo responses


@dataclass
class PseudoResponse:
    """Per-row pseudo response of a node; NaN outside ``covered``."""

    node: str
    values: np.ndarray
    covered: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return np.flatnonzero(self.covered)


def pseudo_response_root(loss: Loss, F_prev: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return loss.gradient(np.asarray(F_prev, dtype=np.float64), labels)


def residual_pseudo_labels(
    schedule: Schedule,
    instance: DatasetInstance,
    child: str,
    parent_pseudo: Mapping[str, PseudoResponse],
    parent_forward_pred: Mapping[str, np.ndarray],
) -> PseudoResponse:
    """Pseudo response of ``child`` from the forward residuals of its parents.

    Each child row receives the mean, over every covered parent row that
    references it (through any parent arc), of that parent row's pseudo
    response minus its forward-tree prediction.
    """
    n_child = instance.n_rows(schedule.table_of(child))
    total = np.zeros(n_child)
    count = np.zeros(n_child)
    for arc in schedule.parent_arcs(child):
        pseudo = parent_pseudo[arc.parent]
        resid = pseudo.values - parent_forward_pred[arc.parent]
        indptr, indices = instance.relation_csr(schedule.table_of(arc.parent), arc.relation)
        parent_of = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
        keep = pseudo.covered[parent_of]
        total += np.bincount(indices[keep], weights=resid[parent_of[keep]], minlength=n_child)
        count += np.bincount(indices[keep], minlength=n_child)
    covered = count > 0
    values = np.full(n_child, np.nan)
    values[covered] = total[covered] / count[covered]
    return PseudoResponse(child, values, covered)


def node_rng(seed: int, iteration: int, node_index: int, klass: int, phase: int) -> np.random.Generator:
    """Independent stream per (seed, iteration, node, class, pass)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, node_index, klass, phase)))


# ---------------------------------------------------------------------------
# Passes


def _fit(block: FeatureBlock, pseudo: PseudoResponse, config: TreeConfig, rng) -> RegressionTree:
    rows = pseudo.rows
    if len(rows) == 0:
        return constant_tree(0.0)
    return train_tree(block.subset(rows), pseudo.values[rows], None, config, rng)


class _Cascade:
    """Per-instance cache of schedule traversal state."""

    def __init__(self, schedule: Schedule, instance: DatasetInstance):
        self.schedule = schedule
        self.instance = instance
        self.order = topological_order(schedule)
        self.index = {n.id: i for i, n in enumerate(schedule.nodes)}
        self.prop = {nid: prop_block(schedule, nid, instance) for nid in self.order}

    def backward_inference(self, trees: Mapping[str, RegressionTree]):
        """Backward-tree predictions of every node over all rows of its table."""
        preds: dict[str, np.ndarray] = {}
        blocks: dict[str, FeatureBlock] = {}
        for nid in reversed(self.order):
            block = self._block(nid, preds, blocks)
            blocks[nid] = block
            preds[nid] = trees[nid].predict(block.mapping(), block.n_rows)
        return preds, blocks

    def _block(self, nid, preds, blocks) -> FeatureBlock:
        if self.schedule.is_leaf(nid):
            return self.prop[nid]
        contrib = {a.child: -preds[a.child] for a in self.schedule.child_arcs(nid)}
        return assemble_b(self.schedule, nid, self.instance, contrib, blocks)


def forward_pass(
    schedule: Schedule,
    instance: DatasetInstance,
    root_pseudo: PseudoResponse,
    config: TreeConfig,
    rng_for: Callable[[str], np.random.Generator],
    _cascade: _Cascade | None = None,
) -> tuple[dict[str, RegressionTree], dict[str, PseudoResponse]]:
    """Top-down: fit each node on its prop columns, push residuals to children."""
    cascade = _cascade or _Cascade(schedule, instance)
    trees: dict[str, RegressionTree] = {}
    pseudo: dict[str, PseudoResponse] = {}
    fwd_pred: dict[str, np.ndarray] = {}
    for nid in cascade.order:
        if nid == schedule.root:
            p = root_pseudo
        else:
            p = residual_pseudo_labels(schedule, instance, nid, pseudo, fwd_pred)
        pseudo[nid] = p
        block = cascade.prop[nid]
        tree = _fit(block, p, config, rng_for(nid))
        trees[nid] = tree
        if not schedule.is_leaf(nid):
            pred = np.full(block.n_rows, np.nan)
            rows = p.rows
            if len(rows):
                pred[rows] = tree.predict({c.name: c.values[rows] for c in block.columns}, len(rows))
            fwd_pred[nid] = pred
    return trees, pseudo


def backward_pass(
    schedule: Schedule,
    instance: DatasetInstance,
    pseudo: Mapping[str, PseudoResponse],
    config: TreeConfig,
    rng_for: Callable[[str], np.random.Generator],
    _cascade: _Cascade | None = None,
) -> tuple[dict[str, RegressionTree], dict[str, np.ndarray]]:
    """Bottom-up: refit each node on its full block; returns trees and all-row predictions."""
    cascade = _cascade or _Cascade(schedule, instance)
    trees: dict[str, RegressionTree] = {}
    preds: dict[str, np.ndarray] = {}
    blocks: dict[str, FeatureBlock] = {}
    for nid in reversed(cascade.order):
        block = cascade._block(nid, preds, blocks)
        blocks[nid] = block
        tree = _fit(block, pseudo[nid], config, rng_for(nid))
        trees[nid] = tree
        preds[nid] = tree.predict(block.mapping(), block.n_rows)
    return trees, preds


# ---------------------------------------------------------------------------
# Model


@dataclass
class StrongModel:
    """Trained ensemble.

    ``trees[i][k][node]`` is the ``(forward, backward)`` tree pair of
    iteration ``i``, class ``k`` and schedule node ``node``. Prediction only
    evaluates backward trees, but child backward trees feed the root's input.
    """

    schema_fingerprint: str
    schedule: Schedule
    loss: Loss
    rho: np.ndarray
    shrinkage: float
    tree_config: TreeConfig
    seed: int
    classes: list[str] | None = None
    trees: list[list[dict[str, tuple[RegressionTree, RegressionTree]]]] = field(default_factory=list)
    log: list[tuple] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trees)

    def backward_trees(self, node: str):
        for per_class in self.trees:
            for nodes in per_class:
                yield nodes[node][1]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "schema_fingerprint": self.schema_fingerprint,
            "schedule": self.schedule.to_dict(),
            "loss": {"kind": self.loss.kind, "n_classes": self.loss.n_classes},
            "classes": self.classes,
            "rho": [float(r) for r in self.rho],
            "shrinkage": self.shrinkage,
            "iterations": self.iterations,
            "seed": self.seed,
            "tree_config": {
                "max_depth": self.tree_config.max_depth,
                "min_examples_leaf": self.tree_config.min_examples_leaf,
                "feature_sampling_ratio": self.tree_config.feature_sampling_ratio,
                "rng_seed": self.tree_config.rng_seed,
            },
            "trees": [
                [
                    {nid: {"forward": f.to_dict(), "backward": b.to_dict()} for nid, (f, b) in nodes.items()}
                    for nodes in per_class
                ]
                for per_class in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StrongModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model file (format {d.get('format')!r})")
        trees = [
            [
                {nid: (RegressionTree.from_dict(p["forward"]), RegressionTree.from_dict(p["backward"])) for nid, p in nodes.items()}
                for nodes in per_class
            ]
            for per_class in d["trees"]
        ]
        return cls(
            schema_fingerprint=d["schema_fingerprint"],
            schedule=Schedule.from_dict(d["schedule"]),
            loss=Loss(d["loss"]["kind"], d["loss"]["n_classes"]),
            rho=np.asarray(d["rho"], dtype=np.float64),
            shrinkage=d["shrinkage"],
            tree_config=TreeConfig(**d["tree_config"]),
            seed=d["seed"],
            classes=d["classes"],
            trees=trees,
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.to_dict(), f, separators=(",", ":"))
            f.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "StrongModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def write_log(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for row in self.log:
                f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def save_model(model: StrongModel, path) -> None:
    model.save(path)


def load_model(path) -> StrongModel:
    return StrongModel.load(path)


# ---------------------------------------------------------------------------
# Training / prediction


def encode_labels(instance: DatasetInstance, loss: Loss, rows: np.ndarray, classes: list[str] | None = None):
    """Labels of ``rows`` in the loss's numeric encoding."""
    raw = instance.labels()[rows]
    if loss.kind == "multiclass_softmax":
        if classes is None:
            raise TrainingError("class list required for multiclass labels")
        index = {c: i for i, c in enumerate(classes)}
        try:
            return np.array([index[str(v)] for v in raw], dtype=np.int64)
        except KeyError as exc:
            raise TrainingError(f"label {exc.args[0]!r} not among the model classes") from None
    y = np.asarray(raw, dtype=np.float64)
    if np.isnan(y).any():
        raise TrainingError("missing labels among the selected rows")
    if loss.kind == "binary_logloss" and not np.isin(y, (0.0, 1.0)).all():
        raise TrainingError("binary loss needs labels in {0, 1}")
    return y


def _metric(loss: Loss, F: np.ndarray, y: np.ndarray) -> float:
    """Accuracy for classification, RMSE for regression."""
    if loss.kind == "mse":
        return float(np.sqrt(np.mean((F - y) ** 2)))
    if loss.kind == "binary_logloss":
        return float(np.mean((F > 0).astype(np.float64) == y))
    return float(np.mean(np.argmax(F, axis=1) == y))


def train(
    schema: Schema,
    instance: DatasetInstance,
    loss: Loss | str | None = None,
    shrinkage: float = 0.1,
    iterations: int = 500,
    tree_config: TreeConfig = TreeConfig(),
    seed: int = 0,
    train_rows: Sequence[int] | np.ndarray | None = None,
    valid: DatasetInstance | None = None,
    valid_rows: Sequence[int] | np.ndarray | None = None,
    cover_count: int = DEFAULT_COVER_COUNT,
    schedule: Schedule | None = None,
    callback: Callable[[int, float, float | None], None] | None = None,
) -> StrongModel:
    """Fit a relational gradient boosted model.

    ``train_rows`` restricts the labeled root rows used for fitting (all
    rows by default); the rest of the instance is still visible through the
    relations. A validation instance, if given, is scored after every
    iteration and the metric is appended to ``model.log``.
    """
    if instance.schema.fingerprint() != schema.fingerprint():
        raise TrainingError("instance does not conform to the schema")
    report = validate_instance(schema, instance)
    if not report.ok:
        raise TrainingError(f"invalid instance:\n{report}")
    if not 0.0 < shrinkage <= 1.0:
        raise TrainingError("shrinkage must be in (0, 1]")
    if iterations < 0:
        raise TrainingError("iterations must be >= 0")
    task = schema.label.task
    n_root = instance.n_rows(schema.root)
    rows = np.arange(n_root) if train_rows is None else np.asarray(train_rows, dtype=np.int64)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    if len(rows) == 0:
        raise TrainingError("no training rows")

    classes = None
    if isinstance(loss, str):
        loss = Loss(LOSS_ALIASES.get(loss, loss), 2)
    if loss is None:
        loss = loss_for_task(task, 2)
    if (task == MULTICLASS) != (loss.kind == "multiclass_softmax"):
        raise TrainingError(f"loss {loss.kind} does not fit a {task} label")
    if task == MULTICLASS:
        classes = sorted({str(v) for v in instance.labels()[rows]})
        while len(classes) < 2:
            classes.append(f"__unused{len(classes)}")
        loss = Loss("multiclass_softmax", len(classes))
    y = encode_labels(instance, loss, rows, classes)

    if schedule is None:
        schedule = build_schedule(schema, cover_count)
    model = StrongModel(
        schema_fingerprint=schema.fingerprint(),
        schedule=schedule,
        loss=loss,
        rho=loss.initial_prediction(y),
        shrinkage=float(shrinkage),
        tree_config=tree_config,
        seed=int(seed),
        classes=classes,
    )
    K = loss.n_outputs
    cascade = _Cascade(schedule, instance)
    root = schedule.root
    F = np.tile(model.rho, (n_root, 1))
    covered = np.zeros(n_root, dtype=bool)
    covered[rows] = True

    valid_state = None
    if valid is not None:
        vrows = np.arange(valid.n_rows(schema.root)) if valid_rows is None else np.asarray(valid_rows, dtype=np.int64)
        valid_state = (_Cascade(schedule, valid), vrows, encode_labels(valid, loss, vrows, classes),
                       np.tile(model.rho, (valid.n_rows(schema.root), 1)))

    for i in range(1, iterations + 1):
        Fr = F[rows, 0] if K == 1 else F[rows]
        grad = loss.gradient(Fr, y)
        if K == 1:
            grad = grad[:, None]
        per_class = []
        for k in range(K):
            values = np.full(n_root, np.nan)
            values[rows] = grad[:, k]
            root_pseudo = PseudoResponse(root, values, covered)
            fwd_rng = lambda nid, k=k: node_rng(model.seed, i, cascade.index[nid], k, FORWARD)
            bwd_rng = lambda nid, k=k: node_rng(model.seed, i, cascade.index[nid], k, BACKWARD)
            fwd, pseudo = forward_pass(schedule, instance, root_pseudo, tree_config, fwd_rng, cascade)
            bwd, preds = backward_pass(schedule, instance, pseudo, tree_config, bwd_rng, cascade)
            F[:, k] -= model.shrinkage * preds[root]
            per_class.append({nid: (fwd[nid], bwd[nid]) for nid in cascade.order})
        model.trees.append(per_class)

        Fr = F[rows, 0] if K == 1 else F[rows]
        train_loss = float(np.mean(loss.value(Fr, y)))
        entry: tuple = (i, train_loss)
        vmetric = None
        if valid_state is not None:
            vcascade, vrows, vy, vF = valid_state
            for k in range(K):
                vpreds, _ = vcascade.backward_inference({nid: per_class[k][nid][1] for nid in vcascade.order})
                vF[:, k] -= model.shrinkage * vpreds[root]
            vmetric = _metric(loss, vF[vrows, 0] if K == 1 else vF[vrows], vy)
            entry = (i, train_loss, vmetric)
        model.log.append(entry)
        if callback is not None:
            callback(i, train_loss, vmetric)
        logger.debug("iteration %d train_loss %.6g%s", i, train_loss, "" if vmetric is None else f" valid {vmetric:.6g}")
    return model


def predict_raw(model: StrongModel, instance: DatasetInstance, rows: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
    """Ensemble scores ``rho - shrinkage * sum_i h_i``; shape ``(n,)`` or ``(n, K)``."""
    if instance.schema.fingerprint() != model.schema_fingerprint:
        raise ValueError("instance schema does not match the model's schema")
    root = model.schedule.root
    n_root = instance.n_rows(root)
    K = model.loss.n_outputs
    F = np.tile(model.rho, (n_root, 1))
    if model.iterations:
        cascade = _Cascade(model.schedule, instance)
        for per_class in model.trees:
            for k in range(K):
                preds, _ = cascade.backward_inference({nid: per_class[k][nid][1] for nid in cascade.order})
                F[:, k] -= model.shrinkage * preds[root]
    if rows is not None:
        F = F[np.asarray(rows)]
    return F[:, 0] if K == 1 else F


def predict(model: StrongModel, instance: DatasetInstance, rows: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
    """Regression values, positive-class probabilities, or class probabilities."""
    return model.loss.transform(predict_raw(model, instance, rows))


def predict_labels(model: StrongModel, instance: DatasetInstance, rows=None) -> np.ndarray:
    F = predict_raw(model, instance, rows)
    if model.loss.kind == "binary_logloss":
        return (F > 0).astype(np.int64)
    if model.loss.kind == "multiclass_softmax":
        return np.asarray(model.classes, dtype=object)[np.argmax(F, axis=1)]
    return F


def evaluate(model: StrongModel, instance: DatasetInstance, rows=None) -> dict:
    """Accuracy (classification) or RMSE (regression) on ``rows``."""
    rows = np.arange(instance.n_rows(model.schedule.root)) if rows is None else np.asarray(rows)
    y = encode_labels(instance, model.loss, rows, model.classes)
    F = predict_raw(model, instance, rows)
    name = "rmse" if model.loss.kind == "mse" else "accuracy"
    return {name: _metric(model.loss, F, y), "n": int(len(rows))}
