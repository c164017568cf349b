"""Synthetic section-level crash data with a planted lane-width effect.

Every feature is drawn independently. The latent crash rate of a section is
a base rate times multiplicative factors for its attributes, times the
planted lane-width multiplier. Yearly crash counts invert the exposure
normalisation of :func:`crashml.data_model.crash_rate`, so the rate-mode
response recovers the latent rate up to rounding and noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import RateParameters, RawObservation

# Lane width -> rate multiplier, averaging 1: 10 > 9 > 12 > 11 ft, with
# 10 ft sitting 25 points of the grand mean above 12 ft.
PLANTED_EFFECT = {9: 1.0755, 10: 1.1525, 11: 0.8695, 12: 0.9025}
FLAT_EFFECT = {9: 1.0, 10: 1.0, 11: 1.0, 12: 1.0}

ROAD_CLASSES = ("collector", "minor_arterial", "principal_arterial")
_CLASS_FACTOR = {"collector": 0.9, "minor_arterial": 1.0, "principal_arterial": 1.15}
_SPEED_LIMITS = (25.0, 30.0, 35.0, 40.0, 45.0)


@dataclass(frozen=True)
class SyntheticTruth:
    effect: dict
    base_rate: float
    noise_sd: float
    seed: int
    intensity: np.ndarray = field(repr=False)       # expected crashes, per record
    section_rate: np.ndarray = field(repr=False)    # latent crash rate, per section
    section_lane_width: np.ndarray = field(repr=False)

    def ordering(self) -> list:
        """Lane widths sorted by planted multiplier, highest first."""
        return sorted(self.effect, key=lambda w: (-self.effect[w], w))

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "effect": {str(k): v for k, v in sorted(self.effect.items())},
            "ordering_high_to_low": self.ordering(),
            "base_rate": self.base_rate,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }


def attribute_multiplier(speed_limit, shoulder, on_street_parking, one_way,
                         road_class, median, cbd) -> float:
    m = 1.0 + 0.01 * (speed_limit - 35.0)
    m *= 0.9 if shoulder else 1.0
    m *= 1.1 if on_street_parking else 1.0
    m *= 0.92 if one_way else 1.0
    m *= 0.88 if median else 1.0
    m *= 1.25 if cbd else 1.0
    return m * _CLASS_FACTOR.get(road_class, 1.0)


def expected_count(rate, section_length, num_lanes, aadt_per_lane,
                   params: RateParameters = RateParameters()) -> float:
    p = params.exposure_p
    return rate * section_length * (num_lanes * aadt_per_lane) ** p * params.days ** p / params.scale


def generate_synthetic(n_sections: int, effect: dict | None = None, noise_sd: float = 0.2,
                       seed: int = 0, years: int = 10, first_year: int = 2005,
                       base_rate: float = 30.0, params: RateParameters = RateParameters(),
                       return_truth: bool = False):
    """Draw ``n_sections * years`` schema-valid raw records.

    Parameters
    ----------
    effect : dict, optional
        Lane width (ft) -> multiplier on the latent crash rate. Widths are
        drawn uniformly from its keys. Defaults to :data:`PLANTED_EFFECT`.
    noise_sd : float
        Standard deviation of the log-normal, mean-one noise applied to each
        yearly expected count before rounding.
    return_truth : bool
        Also return a :class:`SyntheticTruth` with the latent intensities.
    """
    if n_sections < 1:
        raise ValueError("n_sections must be >= 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    if years < 1:
        raise ValueError("years must be >= 1")
    effect = dict(PLANTED_EFFECT if effect is None else effect)
    if not effect or any(v < 0 for v in effect.values()):
        raise ValueError("effect must map lane widths to non-negative multipliers")

    rng = np.random.default_rng(seed)
    widths = np.array(sorted(effect), dtype=float)
    n = n_sections
    lane_width = widths[rng.integers(0, len(widths), n)]
    shoulder = rng.random(n) < 0.4
    speed = np.array(_SPEED_LIMITS)[rng.integers(0, len(_SPEED_LIMITS), n)]
    parking = rng.random(n) < 0.3
    one_way = rng.random(n) < 0.15
    num_lanes = rng.integers(1, 4, n)
    road_class = rng.integers(0, len(ROAD_CLASSES), n)
    median = rng.random(n) < 0.3
    cbd = rng.random(n) < 0.1
    # arterial segments of a quarter mile or more keep yearly counts away from
    # the all-zero regime, where rounding swamps the latent rate
    length = np.round(rng.uniform(0.25, 1.0, n), 3)
    aadt0 = rng.uniform(2000.0, 8000.0, n)
    growth = rng.uniform(-0.01, 0.03, n)
    noise = rng.standard_normal((n, years))

    records, intensity, section_rate = [], [], []
    for i in range(n):
        cls = ROAD_CLASSES[road_class[i]]
        rate = base_rate * effect[float(lane_width[i])] * attribute_multiplier(
            speed[i], shoulder[i], parking[i], one_way[i], cls, median[i], cbd[i])
        section_rate.append(rate)
        for t in range(years):
            aadt = round(float(aadt0[i] * (1.0 + growth[i]) ** t), 1)
            mu = expected_count(rate, float(length[i]), int(num_lanes[i]), aadt, params)
            noisy = mu * np.exp(noise_sd * noise[i, t] - 0.5 * noise_sd ** 2)
            intensity.append(mu)
            records.append(RawObservation(
                section_number=str(i + 1),
                year=first_year + t,
                crash_count=max(0, int(np.floor(noisy + 0.5))),
                section_length=float(length[i]),
                shoulder=int(shoulder[i]),
                speed_limit=float(speed[i]),
                on_street_parking=int(parking[i]),
                one_way=int(one_way[i]),
                num_lanes=int(num_lanes[i]),
                road_class=cls,
                median=int(median[i]),
                lane_width=float(lane_width[i]),
                cbd=int(cbd[i]),
                aadt_per_lane=aadt,
            ))
    if not return_truth:
        return records
    truth = SyntheticTruth({float(k): float(v) for k, v in effect.items()}, base_rate, noise_sd,
                           seed, np.array(intensity), np.array(section_rate), lane_width.copy())
    return records, truth
