"""Double cross-validation splits: three stratified subsets, all six
ordered (train, val, test) permutations."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

from .errors import DegenerateSplitError
from .rng import Xoshiro256StarStar, derive_seed


@dataclass(frozen=True)
class SplitScenario:
    index: int  # 1..6
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


def _stratified_subsets(records, seed: int) -> list[list[str]]:
    by_class: dict[int, list[str]] = {0: [], 1: []}
    for rec in records:
        by_class[int(rec.label)].append(rec.id)
    subsets: list[list[str]] = [[], [], []]
    for label in (0, 1):
        ids = by_class[label]
        if len(ids) < 3:
            raise DegenerateSplitError(
                f"need at least 3 samples of class {label}, got {len(ids)}"
            )
        gen = Xoshiro256StarStar(derive_seed(seed, label))
        gen.shuffle(ids)
        base, extra = divmod(len(ids), 3)
        start = 0
        for i in range(3):
            size = base + (1 if i < extra else 0)
            subsets[i].extend(ids[start : start + size])
            start += size
    return subsets


def make_splits(records, seed: int) -> list[SplitScenario]:
    """Six scenarios from one dataset: a seeded class-stratified partition
    into three near-equal subsets (per-class sizes differ by at most 1),
    then every ordered assignment of (train, val, test)."""
    subsets = _stratified_subsets(records, seed)
    scenarios = []
    for index, (a, b, c) in enumerate(permutations(range(3)), start=1):
        scenarios.append(
            SplitScenario(
                index=index,
                train=tuple(subsets[a]),
                val=tuple(subsets[b]),
                test=tuple(subsets[c]),
            )
        )
    return scenarios


def external_split(records, seed: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Stratified 50:50 split of an external dataset into (val, test);
    odd class counts give the extra sample to val."""
    by_class: dict[int, list[str]] = {0: [], 1: []}
    for rec in records:
        by_class[int(rec.label)].append(rec.id)
    val: list[str] = []
    test: list[str] = []
    for label in (0, 1):
        ids = by_class[label]
        if len(ids) < 2:
            raise DegenerateSplitError(
                f"external split needs at least 2 samples of class {label}, "
                f"got {len(ids)}"
            )
        gen = Xoshiro256StarStar(derive_seed(seed, 10 + label))
        gen.shuffle(ids)
        half = (len(ids) + 1) // 2
        val.extend(ids[:half])
        test.extend(ids[half:])
    return tuple(val), tuple(test)
