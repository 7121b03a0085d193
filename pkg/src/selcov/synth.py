"""Seeded synthetic data with known ground truth, plus closed-form oracles.

Randomness comes from Philox4x64-10 (numpy's ``Philox`` bit generator), a
counter-based generator keyed by a 128-bit integer. Every draw site uses its
own key ``seed | stream << 64`` so streams never overlap and per-species
generation can run in any order. Raw 64-bit words map to floats as
``((w >> 11) + 0.5) * 2**-53``, which lies strictly inside (0, 1). Normal
deviates use Box-Muller on two consecutive blocks of uniforms.
"""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Any

import numpy as np

from .core import PredictionRecord, SpecimenMeta, GROWTH_FORMS, WETLAND_STATUS
from .errors import BadSpec, Intractable
from .phenology import (
    FLOWERING,
    TASKS,
    EventObservation,
    SpeciesDoYEstimate,
    normalize_group,
    species_mean_doy,
    group_by_species,
    truth_observations,
)

MASK64 = (1 << 64) - 1
_U53 = 2.0 ** -53
HIGH_CONFIDENCE = 0.99


class CounterStream:
    """One independent Philox stream identified by (seed, stream)."""

    def __init__(self, seed: int, stream: int = 0):
        self.key = (int(seed) & MASK64) | ((int(stream) & MASK64) << 64)
        self._bits = np.random.Philox(key=self.key)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, n: int) -> np.ndarray:
        return ((self.raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * _U53

    def integers(self, n: int, upper: int) -> np.ndarray:
        """Integers in [0, upper) by scaling uniforms."""
        return np.minimum((self.uniform(n) * upper).astype(np.int64), upper - 1)

    def normal(self, n: int) -> np.ndarray:
        u1 = self.uniform(n)
        u2 = self.uniform(n)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


CALIBRATION_KINDS = ("perfectly_calibrated", "overconfident", "underconfident")


@dataclass(frozen=True)
class CalibrationSpec:
    """Confidence ~ Uniform(lo, hi); P(correct | c) = c, c**gamma or c**(1/gamma)."""

    kind: str = "perfectly_calibrated"
    gamma: float = 1.0
    lo: float = 0.5
    hi: float = 1.0
    n_classes: int = 2
    n: int = 1000
    seed: int = 0
    distribution: str = "uniform"

    def validate(self) -> None:
        if self.kind not in CALIBRATION_KINDS:
            raise BadSpec(f"unknown calibration kind {self.kind!r}")
        if self.distribution != "uniform":
            raise BadSpec(f"unsupported confidence distribution {self.distribution!r}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise BadSpec("gamma must be positive")
        if self.n_classes < 2:
            raise BadSpec("need at least 2 classes")
        if not 1.0 / self.n_classes <= self.lo < self.hi <= 1.0:
            raise BadSpec(f"need 1/K <= lo < hi <= 1, got lo={self.lo}, hi={self.hi}")
        if self.n < 0:
            raise BadSpec("n must be non-negative")

    @property
    def exponent(self) -> float:
        if self.kind == "perfectly_calibrated":
            return 1.0
        if self.kind == "overconfident":
            return self.gamma
        return 1.0 / self.gamma

    def correctness(self, c: np.ndarray) -> np.ndarray:
        return np.clip(c ** self.exponent, 0.0, 1.0)


# stream ids for the prediction generator
_S_CONF, _S_CLASS, _S_HIT, _S_WRONG = 1, 2, 3, 4


def generate_synthetic_predictions(spec: CalibrationSpec) -> list[PredictionRecord]:
    """Labeled records whose top-1 correctness follows the spec's calibration curve."""
    spec.validate()
    n, k = spec.n, spec.n_classes
    if n == 0:
        return []
    conf = spec.lo + (spec.hi - spec.lo) * CounterStream(spec.seed, _S_CONF).uniform(n)
    pred = CounterStream(spec.seed, _S_CLASS).integers(n, k)
    hit = CounterStream(spec.seed, _S_HIT).uniform(n) < spec.correctness(conf)
    offset = 1 + CounterStream(spec.seed, _S_WRONG).integers(n, k - 1)
    label = np.where(hit, pred, (pred + offset) % k)
    rest = (1.0 - conf) / (k - 1)
    records = []
    for i, (c, p, y, r) in enumerate(zip(conf.tolist(), pred.tolist(), label.tolist(), rest.tolist())):
        probs = [r] * k
        probs[p] = c
        records.append(PredictionRecord(f"r{i:07d}", tuple(probs), y))
    return records


@dataclass(frozen=True)
class ExpectedPoint:
    threshold: float
    accuracy: float | None
    coverage: float


@dataclass(frozen=True)
class OracleCurve:
    points: tuple[ExpectedPoint, ...]

    @property
    def grid(self) -> tuple[float, ...]:
        return tuple(p.threshold for p in self.points)


def analytic_curve_oracle(spec: CalibrationSpec, grid: Sequence[float]) -> OracleCurve:
    """Exact E[P(correct|c) | c >= t] and P(c >= t) for uniform confidences.

    With exponent q, E[c**q | c >= a] = (hi**(q+1) - a**(q+1)) / ((q+1)(hi - a)).
    """
    if spec.distribution != "uniform" or spec.kind not in CALIBRATION_KINDS:
        raise Intractable(f"no closed form for {spec.kind!r} with {spec.distribution!r} confidences")
    lo, hi, q = spec.lo, spec.hi, spec.exponent
    pts = []
    for t in grid:
        t = float(t)
        if t >= hi:
            pts.append(ExpectedPoint(t, None, 0.0))
            continue
        a = max(t, lo)
        cov = (hi - a) / (hi - lo)
        acc = (hi ** (q + 1) - a ** (q + 1)) / ((q + 1) * (hi - a))
        pts.append(ExpectedPoint(t, min(acc, 1.0), cov))
    return OracleCurve(tuple(pts))


# --- phenology ----------------------------------------------------------------

@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    true_mean_doy: float
    true_slope: float = 0.0  # days per year
    doy_noise_std: float = 10.0
    samples: int = 200
    group: str | None = None  # native | invasive
    growth_form: str | None = None
    wetland_status: str | None = None


@dataclass(frozen=True)
class PhenoSpec:
    """Synthetic herbarium specimens with planted per-species phenology.

    Each specimen truly shows the event with probability ``event_fraction``;
    its DoY is then ``true_mean + true_slope * (year - mid) + N(0, std)``,
    otherwise a uniform calendar day. The model annotation flips the truth
    with probability ``label_noise_rate``. Confidences are drawn so that
    a share ``high_confidence_share`` of correct annotations reach 0.99 and
    flipped ones reach it just often enough that the flip rate among
    annotations accepted at 0.99 is ``label_noise_rate / 5``; below 0.99
    correct confidences skew high and flipped ones skew low.
    """

    species: tuple[SpeciesSpec, ...]
    year_range: tuple[int, int] = (1870, 2020)
    label_noise_rate: float = 0.1
    event_fraction: float = 0.5
    high_confidence_share: float = 0.3
    task: str = FLOWERING
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.year_range
        if not (1700 <= lo < hi <= 2100):
            raise BadSpec(f"bad year range {self.year_range}")
        if not 0.0 <= self.label_noise_rate < 0.5:
            raise BadSpec("label_noise_rate must be in [0, 0.5)")
        if not 0.0 < self.event_fraction <= 1.0:
            raise BadSpec("event_fraction must be in (0, 1]")
        if not 0.0 < self.high_confidence_share < 1.0:
            raise BadSpec("high_confidence_share must be in (0, 1)")
        if self.task not in TASKS:
            raise BadSpec(f"unknown task {self.task!r}")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise BadSpec("species names must be unique")
        for s in self.species:
            if s.samples < 0 or s.doy_noise_std < 0:
                raise BadSpec(f"species {s.name!r}: negative samples or noise")
            if s.group is not None:
                normalize_group(s.group)
            if s.growth_form is not None and s.growth_form not in GROWTH_FORMS:
                raise BadSpec(f"species {s.name!r}: unknown growth form")
            if s.wetland_status is not None and s.wetland_status not in WETLAND_STATUS:
                raise BadSpec(f"species {s.name!r}: unknown wetland status")

    @property
    def flipped_high_share(self) -> float:
        r = self.label_noise_rate
        return self.high_confidence_share * (1.0 - r) / (5.0 - r)


@dataclass
class SyntheticPhenology:
    spec: PhenoSpec
    records: list[PredictionRecord]
    species_index: np.ndarray
    years: np.ndarray
    true_doy: np.ndarray  # real-valued DoY before calendar rounding
    present: np.ndarray
    flipped: np.ndarray
    grouping: dict[str, str] = field(default_factory=dict)

    def exact_truth_observations(self) -> list[EventObservation]:
        """Present specimens with their unrounded DoY (calendar task semantics skipped)."""
        names = [s.name for s in self.spec.species]
        return [
            EventObservation(names[j], int(y), float(d), self.records[i].record_id)
            for i, (j, y, d) in enumerate(zip(self.species_index.tolist(), self.years.tolist(), self.true_doy.tolist()))
            if self.present[i]
        ]

    def reference_estimates(self, task: str | None = None) -> dict[str, SpeciesDoYEstimate]:
        """Species mean DoY from the true labels, i.e. what a human study would report."""
        task = task or self.spec.task
        obs = truth_observations(self.records, task)
        return species_mean_doy(group_by_species(obs, (s.name for s in self.spec.species)))


def _days_in_year(year: np.ndarray) -> np.ndarray:
    leap = ((year % 4 == 0) & (year % 100 != 0)) | (year % 400 == 0)
    return np.where(leap, 366, 365)


_NATIVITY_OF_GROUP = {"native": "native", "invasive": "introduced"}


def generate_synthetic_phenology(spec: PhenoSpec) -> SyntheticPhenology:
    spec.validate()
    lo_year, hi_year = spec.year_range
    mid = 0.5 * (lo_year + hi_year)
    r = spec.label_noise_rate
    pc, pf = spec.high_confidence_share, spec.flipped_high_share
    records: list[PredictionRecord] = []
    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("sp", "year", "doy", "present", "flipped")}
    grouping = {}
    for j, sp in enumerate(spec.species):
        m = sp.samples
        if sp.group is not None:
            grouping[sp.name] = normalize_group(sp.group)
        if m == 0:
            continue

        def stream(purpose: int) -> CounterStream:
            return CounterStream(spec.seed, ((j + 1) << 8) | purpose)

        years = lo_year + stream(1).integers(m, hi_year - lo_year + 1)
        present = stream(2).uniform(m) < spec.event_fraction
        ndays = _days_in_year(years)
        event_doy = sp.true_mean_doy + sp.true_slope * (years - mid) + sp.doy_noise_std * stream(3).normal(m)
        event_doy = np.clip(event_doy, 1.0, ndays.astype(np.float64))
        other_doy = 1.0 + np.floor(stream(4).uniform(m) * ndays)
        doy = np.where(present, event_doy, other_doy)
        cal_doy = np.clip(np.rint(doy), 1, ndays).astype(np.int64)

        flipped = stream(5).uniform(m) < r
        annotated = np.where(flipped, ~present, present).astype(np.int64)
        u_tier, u_conf = stream(6).uniform(m), stream(7).uniform(m)
        high = u_tier < np.where(flipped, pf, pc)
        low_conf = np.where(flipped, 0.5 + 0.49 * u_conf ** 2, 0.5 + 0.49 * np.sqrt(u_conf))
        conf = np.where(high, HIGH_CONFIDENCE + (1.0 - HIGH_CONFIDENCE) * u_conf, low_conf)

        nativity = _NATIVITY_OF_GROUP.get(grouping.get(sp.name, ""))
        jan1 = {y: date(y, 1, 1).toordinal() for y in np.unique(years).tolist()}
        for i, (y, d, a, c, t) in enumerate(zip(
            years.tolist(), cal_doy.tolist(), annotated.tolist(), conf.tolist(), present.tolist()
        )):
            probs = (c, 1.0 - c) if a == 0 else (1.0 - c, c)
            meta = SpecimenMeta(
                sp.name, date.fromordinal(jan1[y] + d - 1), nativity, sp.growth_form, sp.wetland_status
            )
            records.append(PredictionRecord(f"s{j:04d}-{i:06d}", probs, int(t), meta))
        cols["sp"].append(np.full(m, j, dtype=np.int64))
        cols["year"].append(years)
        cols["doy"].append(doy)
        cols["present"].append(present)
        cols["flipped"].append(flipped)

    def cat(key, dtype):
        return np.concatenate(cols[key]) if cols[key] else np.empty(0, dtype=dtype)

    return SyntheticPhenology(
        spec, records, cat("sp", np.int64), cat("year", np.int64), cat("doy", np.float64),
        cat("present", bool), cat("flipped", bool), grouping,
    )


def replication_spec(
    n_pairs: int = 30,
    gap_days: float = 20.0,
    samples: int = 1000,
    doy_noise_std: float = 15.0,
    label_noise_rate: float = 0.15,
    seed: int = 0,
    **kw: Any,
) -> PhenoSpec:
    """Native/invasive species pairs whose invasive member fruits ``gap_days`` later."""
    base = 215.0 + 40.0 * CounterStream(seed, 0).uniform(n_pairs)
    species = []
    for i, m in enumerate(base.tolist()):
        species.append(SpeciesSpec(f"Native {i:03d}", m, 0.0, doy_noise_std, samples, "native"))
        species.append(SpeciesSpec(f"Invasive {i:03d}", m + gap_days, 0.0, doy_noise_std, samples, "invasive"))
    kw.setdefault("task", "fruiting_replication")
    return PhenoSpec(tuple(species), label_noise_rate=label_noise_rate, seed=seed, **kw)


def shift_spec(
    n_species: int = 50,
    n_shifted: int = 20,
    slope_days_per_decade: float = -0.3,
    samples: int = 300,
    doy_noise_std: float = 4.0,
    label_noise_rate: float = 0.02,
    seed: int = 0,
    **kw: Any,
) -> PhenoSpec:
    """Species with a planted flowering trend for the first ``n_shifted``, none for the rest.

    Growth form and wetland status cycle through fixed lists so trait subsets are populated.
    """
    means = 120.0 + 120.0 * CounterStream(seed, 0).uniform(n_species)
    forms = ("forb_herb", "tree_shrub_subshrub", "vine")
    wet = ("OBL", "FACW", "FAC", "FACU", "UPL")
    species = []
    for i, m in enumerate(means.tolist()):
        slope = slope_days_per_decade / 10.0 if i < n_shifted else 0.0
        species.append(SpeciesSpec(
            f"Species {i:04d}", m, slope, doy_noise_std, samples,
            "native" if i % 2 == 0 else "invasive", forms[i % 3], wet[i % 5],
        ))
    kw.setdefault("event_fraction", 1.0)
    return PhenoSpec(tuple(species), label_noise_rate=label_noise_rate, seed=seed, **kw)


def spec_from_dict(data: Mapping[str, Any], seed: int | None = None):
    """Build a CalibrationSpec or PhenoSpec from a JSON-style mapping.

    ``{"kind": "calibration", ...CalibrationSpec fields}``,
    ``{"kind": "phenology", "preset": "replication"|"shift", ...preset args}`` or
    ``{"kind": "phenology", "species": [...], ...PhenoSpec fields}``.
    """
    data = dict(data)
    kind = data.pop("kind", None)
    if seed is not None:
        data["seed"] = seed
    try:
        if kind == "calibration":
            spec = CalibrationSpec(**data)
            spec.validate()
            return spec
        if kind == "phenology":
            preset = data.pop("preset", None)
            if "year_range" in data:
                data["year_range"] = tuple(data["year_range"])
            if preset == "replication":
                spec = replication_spec(**data)
            elif preset == "shift":
                spec = shift_spec(**data)
            elif preset is None:
                data["species"] = tuple(SpeciesSpec(**s) for s in data.get("species", ()))
                spec = PhenoSpec(**data)
            else:
                raise BadSpec(f"unknown preset {preset!r}")
            spec.validate()
            return spec
    except TypeError as exc:
        raise BadSpec(f"bad spec field: {exc}") from None
    raise BadSpec(f"spec kind must be 'calibration' or 'phenology', got {kind!r}")


def with_seed(spec, seed: int):
    return replace(spec, seed=seed)
