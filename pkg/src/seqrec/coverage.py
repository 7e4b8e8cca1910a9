"""Catalog drift: how much daily item exposure the pre-trained vocabulary
still covers, with and without periodic re-training refreshes.

The simulation grows the catalog by a fixed fraction of new items per
day and exposes the whole current population daily. Under that process
a frozen vocabulary decays strictly, while a refresh every p days keeps
coverage at the previous population over the current one.
"""

from __future__ import annotations

import csv
from typing import Iterable, Sequence

from .config import STREAM_SYNTHETIC, rng_stream


def coverage_ratio(
    vocab: set[str], exposures: Sequence[Iterable[str]]
) -> list[tuple[int, float]]:
    """Per-day fraction of exposed occurrences covered by vocab.

    Days with no exposure are omitted from the series rather than
    reported as a number.
    """
    series = []
    for day, exposed in enumerate(exposures):
        exposed = list(exposed)
        if not exposed:
            continue
        hit = sum(1 for item in exposed if item in vocab)
        series.append((day, hit / len(exposed)))
    return series


def simulate_arrivals(
    n_days: int,
    initial_items: int = 100,
    growth_rate: float = 0.1,
    exposure_fraction: float = 1.0,
    seed: int = 0,
) -> list[list[str]]:
    """Grow-only arrival process; returns one exposure list per day.

    Day 0 exposes the initial catalog. Every later day first adds
    max(1, round(growth_rate * population)) new items, then exposes a
    fraction of the current population (all of it by default, which keeps
    the process deterministic).
    """
    if initial_items < 1:
        raise ValueError("initial_items must be >= 1")
    rng = rng_stream(seed, STREAM_SYNTHETIC)
    population = [f"item{i}" for i in range(initial_items)]
    exposures = []
    for day in range(n_days):
        if day > 0:
            born = max(1, round(growth_rate * len(population)))
            start = len(population)
            population.extend(f"item{start + j}" for j in range(born))
        if exposure_fraction >= 1.0:
            exposures.append(list(population))
        else:
            size = max(1, round(exposure_fraction * len(population)))
            picks = rng.choice(len(population), size=size, replace=False)
            exposures.append([population[i] for i in sorted(picks)])
    return exposures


def warmup_series(
    exposures: Sequence[Iterable[str]], refresh_every: int | None = None
) -> list[tuple[int, float]]:
    """Coverage series for a vocabulary trained on day 0.

    With refresh_every = p, the vocabulary is rebuilt at the start of
    every day divisible by p from all exposures before that day (training
    sees yesterday's data at best). None means the day-0 vocabulary is
    kept forever.
    """
    if refresh_every is not None and refresh_every < 1:
        raise ValueError("refresh_every must be >= 1 or None")
    exposures = [list(e) for e in exposures]
    if not exposures:
        return []
    vocab = set(exposures[0])
    seen: set[str] = set()
    series = []
    for day, exposed in enumerate(exposures):
        if refresh_every is not None and day > 0 and day % refresh_every == 0:
            vocab = set(seen)
        if exposed:
            hit = sum(1 for item in exposed if item in vocab)
            series.append((day, hit / len(exposed)))
        seen.update(exposed)
    return series


def write_series_csv(series: Sequence[tuple[int, float]], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "ratio"])
        for day, ratio in series:
            writer.writerow([day, f"{ratio:.6f}"])
