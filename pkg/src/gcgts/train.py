"""Mini-batch training loop and run configuration."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import numkit as nk
from .corpus import Sentence, encode_gold_grid
from .decode import evaluate_model
from .model import GCGTS, PRESETS, ConfigError, ModelConfig

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    preset: Optional[str] = None
    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    vectors: Optional[str] = None
    checkpoint_dir: str = "checkpoints"
    epochs: int = 10
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_json(self.model)
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise ConfigError(f"unknown preset {self.preset!r}")
            self.model = dataclasses.replace(self.model, **PRESETS[self.preset])
        if self.epochs < 0 or self.eval_every < 1:
            raise ConfigError("epochs >= 0 and eval_every >= 1 required")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_json()
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def train(model: GCGTS, sentences: Sequence[Sentence], epochs: int, seed: int = 0,
          dev: Optional[Sequence[Sentence]] = None, eval_every: int = 1,
          on_epoch: Optional[Callable[[dict, GCGTS], Optional[bool]]] = None) -> List[dict]:
    """Adam over shuffled mini-batches; batch loss is the mean sentence loss.

    Returns one log record per epoch: ``{"epoch", "loss", ["dev"]}``.
    ``on_epoch`` sees each record after it is logged; returning True stops
    training early.
    """
    c = model.config
    opt = nk.Adam(model.params, lr=c.lr)
    inputs = [model.prepare(s) for s in sentences]
    golds = [encode_gold_grid(s, c.mode) for s in sentences]
    rng = np.random.default_rng(seed)
    logs = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(sentences))
        total = 0.0
        for start in range(0, len(order), c.batch_size):
            batch = order[start:start + c.batch_size]
            opt.zero_grad()
            for k in batch:
                loss = model.loss(sentences[k], golds[k], inputs[k])
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss {value} at epoch {epoch}, "
                                        f"sentence {sentences[k].id!r}")
                total += value
                nk.backward(nk.mul(loss, 1.0 / len(batch)))
            opt.step()
        record = {"epoch": epoch, "loss": total / max(len(sentences), 1)}
        if dev is not None and epoch % eval_every == 0:
            record["dev"] = evaluate_model(model, dev)[0].to_json()
        log.info("epoch %d loss %.6f", epoch, record["loss"])
        logs.append(record)
        if on_epoch is not None and on_epoch(record, model):
            break
    return logs
