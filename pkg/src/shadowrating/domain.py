"""Rating-scale vocabulary: Moody's notches, the nine aggregated classes, and
the mapping between classes and the 0..8 regression target."""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import NumericError, SchemaError

N_CLASSES = 9
MIN_TARGET = 0
MAX_TARGET = N_CLASSES - 1


class RatingClass(enum.IntEnum):
    """Aggregated rating class; the integer value is the regression target."""

    Aaa = 0
    Aa = 1
    A = 2
    Baa = 3
    Ba = 4
    B = 5
    Caa = 6
    Ca = 7
    C = 8

    @property
    def target(self) -> int:
        return int(self)

    @property
    def grade(self) -> str:
        return "investment" if self <= RatingClass.Baa else "speculative"


CLASS_NAMES: tuple[str, ...] = tuple(c.name for c in RatingClass)

NOTCHES: tuple[str, ...] = (
    "Aaa",
    "Aa1", "Aa2", "Aa3",
    "A1", "A2", "A3",
    "Baa1", "Baa2", "Baa3",
    "Ba1", "Ba2", "Ba3",
    "B1", "B2", "B3",
    "Caa1", "Caa2", "Caa3",
    "Ca",
    "C",
)

_NOTCH_TO_CLASS = {n: RatingClass[n.rstrip("123")] for n in NOTCHES}


def aggregate_notch(notch: str) -> RatingClass:
    """Collapse a 21-notch code onto its aggregated class (``Baa2 -> Baa``)."""
    try:
        return _NOTCH_TO_CLASS[notch]
    except (KeyError, TypeError):
        raise SchemaError(f"unknown rating notch {notch!r}") from None


def parse_rating(label: str) -> RatingClass:
    """Accept either a notch code or an aggregated class name (case-sensitive)."""
    if label in _NOTCH_TO_CLASS:
        return _NOTCH_TO_CLASS[label]
    if label in CLASS_NAMES:
        return RatingClass[label]
    raise SchemaError(f"unknown rating label {label!r}")


def class_to_target(cls: RatingClass) -> int:
    return int(RatingClass(cls))


def target_to_class(target: int) -> RatingClass:
    return RatingClass(int(target))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def discretize(score: float) -> RatingClass:
    """Map a continuous model output onto a rating class.

    The score is clamped to [0, 8] and rounded to the nearest integer, with
    ties going away from zero (2.5 -> 3).
    """
    if not math.isfinite(score):
        raise NumericError(f"cannot discretize non-finite score {score!r}")
    return RatingClass(int(discretize_array(np.array([score]))[0]))


def discretize_array(scores) -> np.ndarray:
    """Vectorised :func:`discretize` returning integer targets."""
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise NumericError("cannot discretize non-finite scores")
    return _round_half_away(np.clip(s, MIN_TARGET, MAX_TARGET)).astype(np.int64)
