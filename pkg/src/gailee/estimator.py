"""Scikit-learn style wrapper around the trainer."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import TrainConfig
from .data import Corpus, EventSchema, Sentence, build_vocab, validate_sentence
from .extractor import EventExtractorModel, ExtractedEvent, extract_events
from .nn import EmbeddingTable
from .trainer import EpochMetrics, build_bank, evaluate, train_epoch

_DEFAULTS = TrainConfig()


def check_corpus(X, schema: EventSchema | None = None, name: str = "X") -> Corpus:
    """Coerce ``X`` (a Corpus or a sequence of Sentence) to a validated Corpus."""
    if isinstance(X, Corpus):
        sentences, schema = list(X.sentences), schema or X.schema
    elif isinstance(X, (list, tuple)):
        sentences = list(X)
    else:
        raise TypeError(f"{name}: expected a Corpus or a list of Sentence, got {type(X).__name__}")
    if not sentences:
        raise ValueError(f"{name}: empty corpus")
    bad = [type(s).__name__ for s in sentences if not isinstance(s, Sentence)]
    if bad:
        raise TypeError(f"{name}: expected Sentence items, got {bad[0]}")
    if schema is None:
        raise ValueError(f"{name}: a schema is required when passing a plain list of sentences")
    return Corpus([validate_sentence(s, schema) for s in sentences], schema)


def check_pretrained(pretrained, dim: int) -> EmbeddingTable | None:
    if pretrained is None:
        return None
    if not isinstance(pretrained, EmbeddingTable):
        raise TypeError(f"pretrained: expected an EmbeddingTable, got {type(pretrained).__name__}")
    if pretrained.dim != dim:
        raise ValueError(f"pretrained: vectors have dimension {pretrained.dim}, dim_pretrained is {dim}")
    return pretrained


class EventExtractor(BaseEstimator):
    """Joint trigger and argument extractor trained with fixed or adversarial rewards.

    ``fit`` takes annotated sentences (gold events and entities live inside
    each Sentence), so there is no separate ``y``. With ``eval_set`` the
    parameters from the epoch with the best role-labeling F1 are kept.

    Attributes set by ``fit``: ``model_``, ``bank_`` (None in fixed mode),
    ``config_``, ``history_`` (one EpochMetrics per epoch), ``best_epoch_``.
    """

    def __init__(self, reward_mode=_DEFAULTS.reward_mode, labeling_schema=_DEFAULTS.labeling_schema,
                 entity_mode=_DEFAULTS.entity_mode, epochs=_DEFAULTS.epochs, seed=_DEFAULTS.seed,
                 gamma=_DEFAULTS.gamma, epsilon=_DEFAULTS.epsilon, lr=_DEFAULTS.lr, hidden=_DEFAULTS.hidden,
                 dim_surface=_DEFAULTS.dim_surface, dim_pos=_DEFAULTS.dim_pos,
                 dim_pretrained=_DEFAULTS.dim_pretrained, dim_action=_DEFAULTS.dim_action,
                 dropout=_DEFAULTS.dropout, fixed_reward_correct=_DEFAULTS.fixed_reward_correct,
                 fixed_reward_wrong=_DEFAULTS.fixed_reward_wrong, entropy_weight=_DEFAULTS.entropy_weight,
                 policy_entropy=_DEFAULTS.policy_entropy, pg_estimator=_DEFAULTS.pg_estimator,
                 disc_batch=_DEFAULTS.disc_batch, disc_warmup=_DEFAULTS.disc_warmup, pretrained=None):
        self.reward_mode = reward_mode
        self.labeling_schema = labeling_schema
        self.entity_mode = entity_mode
        self.epochs = epochs
        self.seed = seed
        self.gamma = gamma
        self.epsilon = epsilon
        self.lr = lr
        self.hidden = hidden
        self.dim_surface = dim_surface
        self.dim_pos = dim_pos
        self.dim_pretrained = dim_pretrained
        self.dim_action = dim_action
        self.dropout = dropout
        self.fixed_reward_correct = fixed_reward_correct
        self.fixed_reward_wrong = fixed_reward_wrong
        self.entropy_weight = entropy_weight
        self.policy_entropy = policy_entropy
        self.pg_estimator = pg_estimator
        self.disc_batch = disc_batch
        self.disc_warmup = disc_warmup
        self.pretrained = pretrained

    def _make_config(self) -> TrainConfig:
        keys = set(TrainConfig.keys())
        return TrainConfig(**{k: v for k, v in self.get_params().items() if k in keys})

    def fit(self, X, y=None, eval_set=None) -> "EventExtractor":
        if y is not None:
            raise ValueError("y must be None: annotations are read from the sentences")
        config = self._make_config()
        train = check_corpus(X)
        dev = check_corpus(eval_set, train.schema, "eval_set") if eval_set is not None else None
        pretrained = check_pretrained(self.pretrained, config.dim_pretrained)

        model = EventExtractorModel(train.schema, build_vocab(train), config, pretrained)
        bank = build_bank(model, config) if config.reward_mode == "gail" else None
        rng = np.random.default_rng([config.seed, 2])
        if bank is not None:
            for _ in range(config.disc_warmup):
                train_epoch(train, model, bank, config, rng, 0, update_policy=False)

        history: list[EpochMetrics] = []
        best_f1, best_epoch, best_state = -1.0, 0, None
        for epoch in range(1, config.epochs + 1):
            history.append(train_epoch(train, model, bank, config, rng, epoch))
            if dev is not None:
                f1 = evaluate(dev, model, config, epoch, "dev").f1("role_labeling")
                if f1 > best_f1:
                    best_f1, best_epoch = f1, epoch
                    best_state = {k: v.value.copy() for k, v in model.named_tensors().items()}
        if best_state is not None:
            model.load_tensors(best_state)
        else:
            best_epoch = config.epochs

        self.config_, self.model_, self.bank_ = config, model, bank
        self.history_, self.best_epoch_ = history, best_epoch
        return self

    def predict(self, X) -> list[list[ExtractedEvent]]:
        check_is_fitted(self, "model_")
        corpus = check_corpus(X, self.model_.schema)
        return [extract_events(self.model_, s, self.config_.entity_mode) for s in corpus]

    def evaluate(self, X) -> EpochMetrics:
        check_is_fitted(self, "model_")
        return evaluate(check_corpus(X, self.model_.schema), self.model_, self.config_)

    def score(self, X, y=None) -> float:
        """Role-labeling F1 on ``X``."""
        return self.evaluate(X).f1("role_labeling")


__all__: Sequence[str] = ["EventExtractor", "check_corpus", "check_pretrained"]
