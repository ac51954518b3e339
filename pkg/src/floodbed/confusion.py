"""Batch-level confusion statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .traffic import Kind


class EvaluationError(ValueError):
    """A decision refers to a packet that has no ground-truth entry."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else math.nan

    @property
    def tpr(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else math.nan

    @property
    def tnr(self) -> float:
        neg = self.tn + self.fp
        return self.tn / neg if neg else math.nan

    @property
    def fpr(self) -> float:
        neg = self.tn + self.fp
        return self.fp / neg if neg else math.nan

    @property
    def tpr_defined(self) -> bool:
        return self.tp + self.fn > 0

    @property
    def tnr_defined(self) -> bool:
        return self.tn + self.fp > 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "tpr": self.tpr, "tnr": self.tnr,
            "tpr_defined": self.tpr_defined, "tnr_defined": self.tnr_defined,
        }


def batch_is_attack(members: Iterable[tuple[int, int]], kinds: Mapping[tuple[int, int], Kind]) -> bool:
    """True label of a batch: strict majority of its packets are flood."""
    flood = total = 0
    for key in members:
        try:
            kind = kinds[key]
        except KeyError:
            raise EvaluationError(f"packet {key} has no ground-truth entry") from None
        total += 1
        flood += kind == Kind.FLOOD
    return 2 * flood > total


def confusion(predicted: Iterable[bool], actual: Iterable[bool]) -> ConfusionCounts:
    tp = fp = tn = fn = 0
    for p, a in zip(predicted, actual, strict=True):
        if p and a:
            tp += 1
        elif p:
            fp += 1
        elif a:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)
