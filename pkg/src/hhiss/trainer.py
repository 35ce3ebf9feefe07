"""Training procedures: ERM, IRM stage 1, the prune/intersect/fine-tune rounds and ablation baselines.

Randomness is split into independent streams keyed by ``(seed, phase,
round)`` so that a phase can be replayed in isolation, which is what makes
the ablation collapse laws testable bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import FeatureDataset, validation_split
from .errors import ConfigError, DataError, NumericalError
from .losses import LossWeights, combined_loss
from .metrics import balanced_accuracy
from .net import AdamState, NetworkArch, NetworkParams, apply_update, backward, forward, init_network
from .pruning import PruneMask, importance_scores, intersect_masks, loss_gradients, retention_mask, subject_masks

log = logging.getLogger(__name__)

METHODS = ("erm", "irm", "erm-prune", "sparsetrain", "kd", "hhiss")

# rng phase tags
_STAGE1 = 1
_ROUND = 2
_FINETUNE = 3


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta: float = 0.3
    lam: float = 0.5
    prune_fraction: float = 0.5
    threshold: float = 0.70
    rounds: int = 50
    stage1_epochs: int = 500
    finetune_epochs: int = 50
    inner_epoch_cap: int = 200
    batch_size: int = 64
    seed: int = 0
    validation_fraction: float = 0.15
    dropout: float = 0.1
    hidden: tuple[int, ...] = (128, 128, 128)
    # squared IRMv1 penalty; the plain norm summed over subjects collapses to a constant predictor
    squared_penalty: bool = True
    per_layer_ranking: bool = False
    teacher_in_masks: bool = True
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError("threshold T must lie in (0, 1]")
        if self.rounds < 1:
            raise ConfigError("rounds R must be >= 1")
        if not 0.0 <= self.prune_fraction < 1.0:
            raise ConfigError("prune fraction K must lie in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("learning rate and batch size must be positive")
        if self.stage1_epochs < 0 or self.finetune_epochs < 0 or self.inner_epoch_cap < 1:
            raise ConfigError("epoch counts must be non-negative (inner cap >= 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        LossWeights(self.beta, self.lam)

    def replace(self, **kw) -> "TrainConfig":
        d = asdict(self)
        d.update(kw)
        return TrainConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def loss_weights(self, beta=None, lam=None) -> LossWeights:
        return LossWeights(
            self.beta if beta is None else beta,
            self.lam if lam is None else lam,
            self.squared_penalty,
        )


@dataclass
class RoundTrace:
    round: int
    retention: float
    epochs: int
    val_ba: float
    reached_threshold: bool
    loss_total: float
    loss_ce: float
    loss_irm: float
    loss_soft: float
    subject_retention: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainResult:
    params: NetworkParams
    method: str
    traces: list[RoundTrace] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    teacher: NetworkParams | None = None
    val_ba: float | None = None


@dataclass
class _Split:
    X: np.ndarray
    y: np.ndarray
    env: np.ndarray  # integer environment (subject) code per training row
    subjects: np.ndarray
    Xv: np.ndarray
    yv: np.ndarray

    @property
    def has_validation(self) -> bool:
        return len(self.yv) > 0 and len(np.unique(self.yv)) == 2


def _rng(config: TrainConfig, phase: int, rnd: int = 0) -> np.random.Generator:
    return np.random.default_rng([config.seed, phase, rnd])


def prepare(dataset: FeatureDataset, config: TrainConfig) -> _Split:
    """Carve the person-disjoint validation slice and encode environments."""
    ids = dataset.subject_ids
    if len(ids) < 2:
        raise DataError("training needs at least two subjects")
    train_ids, val_ids = validation_split(ids, config.validation_fraction, config.seed)
    tr = np.isin(dataset.subjects, train_ids)
    va = np.isin(dataset.subjects, val_ids)
    y = dataset.y[tr]
    if len(np.unique(y)) < 2:
        raise DataError("training rows contain a single class")
    subjects = dataset.subjects[tr]
    _, env = np.unique(subjects, return_inverse=True)
    return _Split(dataset.X[tr], y, env, subjects, dataset.X[va], dataset.y[va])


def new_model(split: _Split, config: TrainConfig) -> NetworkParams:
    arch = NetworkArch((split.X.shape[1], *config.hidden, 2), config.dropout)
    params = init_network(arch, config.seed)
    if config.standardize:
        scale = split.X.std(axis=0)
        params.input_shift = split.X.mean(axis=0)
        params.input_scale = np.where(scale > 0, scale, 1.0)
    return params


def stratified_batches(env: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Minibatches that each hold rows of every environment.

    Each environment's rows are shuffled and dealt into the same number of
    chunks; batch ``b`` is the union of every environment's chunk ``b``.
    """
    n_batches = max(1, int(np.ceil(len(env) / batch_size)))
    chunks = [[] for _ in range(n_batches)]
    for e in range(int(env.max()) + 1):
        rows = rng.permutation(np.flatnonzero(env == e))
        for b, part in enumerate(np.array_split(rows, n_batches)):
            chunks[b].append(part)
    batches = [np.concatenate(c) for c in chunks]
    return [b for b in batches if len(b)]


def _eval_ba(params: NetworkParams, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(params, X, training=False)
    return balanced_accuracy(y, logits.argmax(axis=1), 2)


def _epoch(params, state, split, config, weights, teacher, rng) -> np.ndarray:
    sums = np.zeros(4)
    batches = stratified_batches(split.env, config.batch_size, rng)
    for idx in batches:
        logits, cache = forward(params, split.X[idx], training=True, rng=rng)
        t = None if teacher is None else teacher[idx]
        out = combined_loss(logits, split.y[idx], split.env[idx], weights, t)
        if not np.isfinite(out.total):
            raise NumericalError(f"non-finite loss (ce={out.ce}, irm={out.irm}, soft={out.soft})")
        apply_update(params, backward(params, cache, out.grad), state, config.learning_rate)
        sums += (out.total, out.ce, out.irm, out.soft)
    return sums / len(batches)


def validation_ba(params: NetworkParams, split: _Split) -> float:
    """Balanced accuracy on the validation slice (training rows when there is none)."""
    if split.has_validation:
        return _eval_ba(params, split.Xv, split.yv)
    return _eval_ba(params, split.X, split.y)


def run_epochs(
    params: NetworkParams,
    split: _Split,
    config: TrainConfig,
    weights: LossWeights,
    epochs: int,
    rng: np.random.Generator,
    teacher: np.ndarray | None = None,
    threshold: float | None = None,
) -> tuple[int, list[dict]]:
    """Train ``params`` in place for up to ``epochs`` epochs with a fresh optimizer.

    With ``threshold`` training stops after the first epoch whose validation
    balanced accuracy reaches it.
    """
    state = AdamState.zeros_like(params)
    history = []
    for ep in range(epochs):
        total, ce, irm, soft = _epoch(params, state, split, config, weights, teacher, rng)
        rec = {"epoch": ep + 1, "total": total, "ce": ce, "irm": irm, "soft": soft, "val_ba": validation_ba(params, split)}
        history.append(rec)
        if threshold is not None and rec["val_ba"] >= threshold:
            break
    return len(history), history


def teacher_logits(teacher: NetworkParams, X: np.ndarray) -> np.ndarray:
    logits, _ = forward(teacher, X, training=False)
    return logits


def _fit_stage1(dataset, config, beta) -> TrainResult:
    split = prepare(dataset, config)
    params = new_model(split, config)
    _, hist = run_epochs(params, split, config, config.loss_weights(beta=beta, lam=0.0), config.stage1_epochs, _rng(config, _STAGE1))
    return TrainResult(params, "erm" if beta == 0 else "irm", history=hist, val_ba=validation_ba(params, split))


def train_erm(dataset: FeatureDataset, config: TrainConfig) -> NetworkParams:
    """Plain cross-entropy training for ``stage1_epochs``."""
    return _fit_stage1(dataset, config, 0.0).params


def train_irm_stage1(dataset: FeatureDataset, config: TrainConfig) -> NetworkParams:
    """Dense teacher: CE + beta * sum of per-subject IRM penalties."""
    return _fit_stage1(dataset, config, config.beta).params


def intersection_mask(
    params: NetworkParams,
    split: _Split,
    config: TrainConfig,
    teacher: np.ndarray | None,
) -> tuple[PruneMask, float]:
    """Per-subject retention masks and their intersection; also returns mean per-subject retention."""
    t = teacher if config.teacher_in_masks else None
    masks = subject_masks(
        params, split.X, split.y, split.subjects, config.prune_fraction,
        config.loss_weights(), t, config.per_layer_ranking,
    )
    subj_ret = float(np.mean([m.retention_fraction for m in masks.values()]))
    return intersect_masks(list(masks.values())), subj_ret


def hhiss_round(
    params: NetworkParams,
    teacher: np.ndarray | None,
    split: _Split,
    config: TrainConfig,
    round_index: int,
    keep_mask: bool = False,
) -> tuple[NetworkParams, RoundTrace]:
    """Prune per subject, intersect, zero the rest, then fine-tune until validation BA >= T.

    The mask is released for fine-tuning (zeroed weights may regrow) unless
    ``keep_mask`` is set, in which case it stays enforced.
    """
    mask, subj_ret = intersection_mask(params, split, config, teacher)
    params.attach_mask(mask)
    if not keep_mask:
        params.release_mask()
    epochs, hist = run_epochs(
        params, split, config, config.loss_weights(), config.inner_epoch_cap,
        _rng(config, _ROUND, round_index), teacher, config.threshold,
    )
    last = hist[-1]
    trace = RoundTrace(
        round=round_index,
        retention=mask.retention_fraction,
        epochs=epochs,
        val_ba=last["val_ba"],
        reached_threshold=last["val_ba"] >= config.threshold,
        loss_total=last["total"],
        loss_ce=last["ce"],
        loss_irm=last["irm"],
        loss_soft=last["soft"],
        subject_retention=subj_ret,
    )
    log.info("round %d retention=%.4f epochs=%d val_ba=%.4f", round_index, trace.retention, epochs, trace.val_ba)
    return params, trace


def hhiss_fit(dataset: FeatureDataset, config: TrainConfig, on_round=None) -> TrainResult:
    """Stage-1 IRM teacher, then ``rounds`` prune/intersect/fine-tune rounds.

    The last round fine-tunes with its intersection mask enforced, so the
    returned model carries that mask exactly.
    """
    stage1 = _fit_stage1(dataset, config, config.beta)
    split = prepare(dataset, config)
    teacher = stage1.params
    t_logits = teacher_logits(teacher, split.X) if config.lam > 0 or config.teacher_in_masks else None
    params = teacher.copy()
    traces = []
    for r in range(1, config.rounds + 1):
        params, trace = hhiss_round(params, t_logits, split, config, r, keep_mask=r == config.rounds)
        traces.append(trace)
        if on_round is not None:
            on_round(trace)
    return TrainResult(params, "hhiss", traces, stage1.history, teacher, validation_ba(params, split))


def hhiss_train(dataset: FeatureDataset, config: TrainConfig) -> tuple[NetworkParams, list[RoundTrace]]:
    res = hhiss_fit(dataset, config)
    return res.params, res.traces


def continue_training(
    params: NetworkParams,
    dataset: FeatureDataset,
    config: TrainConfig,
    epochs: int,
    round_index: int = 1,
    stream: str = "round",
) -> NetworkParams:
    """Replay a fine-tuning random stream for a fixed number of epochs.

    ``stream="round"`` replays HHISS round ``round_index``; ``"finetune"``
    replays the pooled-pruning baselines' fine-tune.  Used to check that
    degenerate settings reduce to ERM followed by plain fine-tuning.
    """
    if stream not in ("round", "finetune"):
        raise ConfigError(f"unknown stream {stream!r}")
    split = prepare(dataset, config)
    out = params.copy()
    t = teacher_logits(params, split.X) if config.lam > 0 else None
    rng = _rng(config, _ROUND, round_index) if stream == "round" else _rng(config, _FINETUNE)
    run_epochs(out, split, config, config.loss_weights(), epochs, rng, t)
    return out


def _pooled_prune_finetune(stage1: TrainResult, dataset, config, weights, method) -> TrainResult:
    split = prepare(dataset, config)
    params = stage1.params.copy()
    grads = loss_gradients(params, split.X, split.y, split.env, weights)
    mask = retention_mask(importance_scores(params, grads), config.prune_fraction, config.per_layer_ranking)
    params.attach_mask(mask)
    _, hist = run_epochs(params, split, config, weights, config.finetune_epochs, _rng(config, _FINETUNE))
    return TrainResult(params, method, history=stage1.history + hist, val_ba=validation_ba(params, split))


def baseline_erm_pruning(dataset: FeatureDataset, config: TrainConfig) -> NetworkParams:
    """ERM, pooled gradient-magnitude pruning at K, CE fine-tune with the mask enforced."""
    return _erm_pruning(dataset, config).params


def _erm_pruning(dataset, config):
    return _pooled_prune_finetune(_fit_stage1(dataset, config, 0.0), dataset, config, config.loss_weights(0.0, 0.0), "erm-prune")


def baseline_sparsetrain(dataset: FeatureDataset, config: TrainConfig) -> NetworkParams:
    """IRM stage 1, pooled pruning at K, IRM fine-tune; no intersection and no soft labels."""
    return _sparsetrain(dataset, config).params


def _sparsetrain(dataset, config):
    return _pooled_prune_finetune(
        _fit_stage1(dataset, config, config.beta), dataset, config, config.loss_weights(lam=0.0), "sparsetrain"
    )


def baseline_kd(dataset: FeatureDataset, config: TrainConfig) -> NetworkParams:
    """Fresh student trained with CE + lam * soft-label CE against the IRM teacher; no pruning."""
    return _kd(dataset, config).params


def _kd(dataset, config):
    teacher = _fit_stage1(dataset, config, config.beta).params
    split = prepare(dataset, config)
    student = new_model(split, config)
    t = teacher_logits(teacher, split.X) if config.lam > 0 else None
    _, hist = run_epochs(
        student, split, config, config.loss_weights(beta=0.0), config.stage1_epochs, _rng(config, _STAGE1), t
    )
    return TrainResult(student, "kd", history=hist, teacher=teacher, val_ba=validation_ba(student, split))


def fit(method: str, dataset: FeatureDataset, config: TrainConfig, on_round=None) -> TrainResult:
    """Dispatch on ``method`` (one of :data:`METHODS`)."""
    if method == "erm":
        return _fit_stage1(dataset, config, 0.0)
    if method == "irm":
        return _fit_stage1(dataset, config, config.beta)
    if method == "erm-prune":
        return _erm_pruning(dataset, config)
    if method == "sparsetrain":
        return _sparsetrain(dataset, config)
    if method == "kd":
        return _kd(dataset, config)
    if method == "hhiss":
        return hhiss_fit(dataset, config, on_round)
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
