"""Day-of-year phenology statistics built on top of thresholded annotations.

Covers the fruiting-study replication (per-species mean DoY, native vs
invasive gap), per-species flowering-shift regressions with sample filters,
trait categorisation and pairwise Welch comparisons between categories.
"""
from __future__ import annotations

import csv
import itertools
import math
import os
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from typing import Any

import numpy as np

from .core import PredictionRecord, SpecimenMeta
from .engine import ThresholdPolicy, acceptance_mask, ScoredSet
from .errors import (
    DataError,
    InvalidDate,
    NoOverlap,
    TooFewPoints,
    TooFewSpecies,
    ZeroVariance,
    DegenerateX,
)
from .stats import linear_regression, welch_t_test

FRUITING = "fruiting_replication"
FLOWERING = "flowering"
TASKS = (FRUITING, FLOWERING)

SIGNIFICANCE = 0.05
ERA_BOUNDARY = 1950
MIN_SAMPLES = 75
MIN_PER_ERA = 37
EARLY_SEASON_MAX_DOY = 180
NARROW_DURATION_MAX_DAYS = 28.0

CHARACTERISTICS = ("growth_form", "nativity", "wetland", "seasonal_timing", "flowering_duration")
SHIFT_CSV_HEADER = ("species", "slope_dpy", "slope_dpd", "p", "n", "n_pre", "n_post", "class")
TRAITS_CSV_HEADER = ("species", "nativity", "growth_form", "wetland", "mean_doy", "std_doy", "n_doy", "duration")


@dataclass(frozen=True, slots=True)
class EventObservation:
    species: str
    year: int
    doy: float
    source_record_id: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.doy <= 366 + 365:
            raise DataError(f"day of year {self.doy} outside [1, 731]")


def day_of_year(d: date) -> int:
    return d.timetuple().tm_yday


def to_event_doy(specimen: SpecimenMeta, task: str, record_id: str = "") -> EventObservation | None:
    """Map a specimen to an event day-of-year, or ``None`` when it is discarded.

    ``flowering`` uses the calendar DoY. ``fruiting_replication`` treats
    January/February fruit as last season's (DoY + 365) and discards
    March-May collections.
    """
    d = specimen.collection_date
    if not isinstance(d, date):
        raise InvalidDate(f"collection date {d!r} is not a date")
    doy = day_of_year(d)
    if task == FLOWERING:
        return EventObservation(specimen.species, d.year, float(doy), record_id)
    if task != FRUITING:
        raise ValueError(f"unknown task {task!r}")
    if 3 <= d.month <= 5:
        return None
    if d.month <= 2:
        doy += 365
    return EventObservation(specimen.species, d.year, float(doy), record_id)


@dataclass(frozen=True)
class SpeciesDoYEstimate:
    species: str
    mean_doy: float | None
    std_doy: float | None
    n: int

    @property
    def empty(self) -> bool:
        return self.n == 0


def _doy_values(items: Iterable) -> list[float]:
    return [o.doy if isinstance(o, EventObservation) else float(o) for o in items]


def group_by_species(observations: Iterable[EventObservation], species: Iterable[str] = ()) -> dict[str, list[EventObservation]]:
    """Group observations by species; every name in ``species`` gets an entry even if empty."""
    out: dict[str, list[EventObservation]] = {s: [] for s in species}
    for o in observations:
        out.setdefault(o.species, []).append(o)
    return out


def species_mean_doy(grouped: Mapping[str, Iterable]) -> dict[str, SpeciesDoYEstimate]:
    """Mean and sample standard deviation of DoY per species.

    Values may be EventObservations or bare numbers. Species with no
    observations yield an empty estimate rather than being dropped.
    """
    out = {}
    for sp in sorted(grouped):
        vals = _doy_values(grouped[sp])
        n = len(vals)
        if n == 0:
            out[sp] = SpeciesDoYEstimate(sp, None, None, 0)
            continue
        mean = math.fsum(vals) / n
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n >= 2 else None
        out[sp] = SpeciesDoYEstimate(sp, mean, std, n)
    return out


NATIVE_GROUP = "native"
INVASIVE_GROUP = "invasive"
_GROUP_ALIASES = {"native": NATIVE_GROUP, "invasive": INVASIVE_GROUP, "introduced": INVASIVE_GROUP}


def normalize_group(label: str) -> str:
    try:
        return _GROUP_ALIASES[label.strip().lower()]
    except KeyError:
        raise DataError(f"unknown group {label!r}; expected native or invasive") from None


@dataclass(frozen=True)
class ReplicationReport:
    mean_abs_doy_error: float
    empty_count: int
    group_difference_days: float | None
    reference_group_difference_days: float | None
    n_compared: int
    per_species: tuple[tuple[str, float, float, float], ...] = field(default=())

    @property
    def group_difference_error(self) -> float | None:
        if self.group_difference_days is None or self.reference_group_difference_days is None:
            return None
        return abs(self.group_difference_days - self.reference_group_difference_days)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_abs_doy_error": self.mean_abs_doy_error,
            "empty_count": self.empty_count,
            "group_difference_days": self.group_difference_days,
            "reference_group_difference_days": self.reference_group_difference_days,
            "group_difference_error": self.group_difference_error,
            "n_compared": self.n_compared,
            "per_species": [
                {"species": s, "model_mean_doy": m, "reference_mean_doy": r, "abs_error": e}
                for s, m, r, e in self.per_species
            ],
        }


def _group_difference(estimates: Mapping[str, SpeciesDoYEstimate], grouping: Mapping[str, str]) -> float | None:
    by_group: dict[str, list[float]] = {NATIVE_GROUP: [], INVASIVE_GROUP: []}
    for sp in sorted(estimates):
        est = estimates[sp]
        if est.mean_doy is None or sp not in grouping:
            continue
        by_group[normalize_group(grouping[sp])].append(est.mean_doy)
    if not by_group[NATIVE_GROUP] or not by_group[INVASIVE_GROUP]:
        return None
    return (math.fsum(by_group[INVASIVE_GROUP]) / len(by_group[INVASIVE_GROUP])
            - math.fsum(by_group[NATIVE_GROUP]) / len(by_group[NATIVE_GROUP]))


def replication_report(
    model_estimates: Mapping[str, SpeciesDoYEstimate],
    reference_estimates: Mapping[str, SpeciesDoYEstimate],
    grouping: Mapping[str, str],
) -> ReplicationReport:
    """Compare model-derived species mean DoYs against a reference study.

    The error is the mean absolute per-species difference over species with
    a mean in both sets. ``empty_count`` counts reference species for which
    the model has no accepted observation. Group differences are invasive
    minus native, averaged over species means.
    """
    ref = {s: e for s, e in reference_estimates.items() if e.mean_doy is not None}
    if not ref:
        raise NoOverlap("reference has no species with a mean DoY")
    rows = []
    empty = 0
    for sp in sorted(ref):
        est = model_estimates.get(sp)
        if est is None or est.mean_doy is None:
            empty += 1
            continue
        err = abs(est.mean_doy - ref[sp].mean_doy)
        rows.append((sp, est.mean_doy, ref[sp].mean_doy, err))
    if not rows:
        raise NoOverlap("no species has both a model and a reference mean DoY")
    mae = math.fsum(r[3] for r in rows) / len(rows)
    return ReplicationReport(
        mean_abs_doy_error=mae,
        empty_count=empty,
        group_difference_days=_group_difference(model_estimates, grouping),
        reference_group_difference_days=_group_difference(ref, grouping),
        n_compared=len(rows),
        per_species=tuple(rows),
    )


@dataclass(frozen=True)
class ShiftFilters:
    min_samples: int = MIN_SAMPLES
    min_per_era: int = MIN_PER_ERA
    era_boundary: int = ERA_BOUNDARY  # years < boundary are "before"


@dataclass(frozen=True)
class SpeciesShiftEstimate:
    species: str
    slope_days_per_year: float | None
    p_value: float | None
    n: int
    n_pre_1950: int
    n_post_1950: int
    classification: str  # earlier | later | none | filtered
    degenerate: bool = False

    @property
    def slope_days_per_decade(self) -> float | None:
        if self.slope_days_per_year is None:
            return None
        return 10.0 * self.slope_days_per_year

    @property
    def filtered(self) -> bool:
        return self.classification == "filtered"


def classify_shift(slope: float, p_value: float, alpha: float = SIGNIFICANCE) -> str:
    if p_value >= alpha:
        return "none"
    if slope < 0:
        return "earlier"
    if slope > 0:
        return "later"
    return "none"


def species_shift_arrays(species: str, years, doys, filters: ShiftFilters = ShiftFilters()) -> SpeciesShiftEstimate:
    years = np.asarray(years, dtype=np.float64)
    doys = np.asarray(doys, dtype=np.float64)
    n = int(years.size)
    n_pre = int(np.count_nonzero(years < filters.era_boundary))
    n_post = n - n_pre
    if n < filters.min_samples or n_pre < filters.min_per_era or n_post < filters.min_per_era:
        return SpeciesShiftEstimate(species, None, None, n, n_pre, n_post, "filtered")
    try:
        fit = linear_regression(years, doys)
    except (TooFewPoints, DegenerateX):
        return SpeciesShiftEstimate(species, None, None, n, n_pre, n_post, "filtered")
    return SpeciesShiftEstimate(
        species, fit.slope, fit.p_value, n, n_pre, n_post,
        classify_shift(fit.slope, fit.p_value), fit.degenerate,
    )


def species_shift(species: str, observations: Sequence[EventObservation], filters: ShiftFilters = ShiftFilters()) -> SpeciesShiftEstimate:
    """Regress DoY on collection year for one species after sample-size filters."""
    years = [o.year for o in observations]
    doys = [o.doy for o in observations]
    return species_shift_arrays(species, years, doys, filters)


def shifts_for_observations(observations: Iterable[EventObservation], filters: ShiftFilters = ShiftFilters(), species: Iterable[str] = ()) -> list[SpeciesShiftEstimate]:
    grouped = group_by_species(observations, species)
    return [species_shift(sp, grouped[sp], filters) for sp in sorted(grouped)]


@dataclass(frozen=True)
class ShiftAggregate:
    n_analyzed: int
    n_filtered: int
    n_significant: int
    n_earlier: int
    n_later: int
    n_none: int
    mean_shift_days_per_year: float | None
    min_shift: tuple[str, float] | None  # (species, days/year)
    max_shift: tuple[str, float] | None
    significant_only: bool = False

    @property
    def mean_shift_days_per_decade(self) -> float | None:
        m = self.mean_shift_days_per_year
        return None if m is None else 10.0 * m

    def to_dict(self) -> dict[str, Any]:
        def ext(e):
            if e is None:
                return None
            return {"species": e[0], "slope_days_per_year": e[1], "slope_days_per_decade": 10.0 * e[1]}

        return {
            "n_analyzed": self.n_analyzed,
            "n_filtered": self.n_filtered,
            "n_significant": self.n_significant,
            "n_earlier": self.n_earlier,
            "n_later": self.n_later,
            "n_none": self.n_none,
            "mean_shift_days_per_year": self.mean_shift_days_per_year,
            "mean_shift_days_per_decade": self.mean_shift_days_per_decade,
            "mean_over": "significant" if self.significant_only else "analyzed",
            "min_shift": ext(self.min_shift),
            "max_shift": ext(self.max_shift),
        }


def aggregate_shifts(estimates: Iterable[SpeciesShiftEstimate], significant_only: bool = False) -> ShiftAggregate:
    """Counts per classification, mean shift and extremes over non-filtered species.

    With ``significant_only`` the mean and extremes are taken over species
    classified earlier or later; counts are unaffected.
    """
    ests = sorted(estimates, key=lambda e: e.species)
    analyzed = [e for e in ests if not e.filtered]
    counts = Counter(e.classification for e in analyzed)
    pool = [e for e in analyzed if e.classification in ("earlier", "later")] if significant_only else analyzed
    mean = None
    lo = hi = None
    if pool:
        mean = math.fsum(e.slope_days_per_year for e in pool) / len(pool)
        lo_e = min(pool, key=lambda e: (e.slope_days_per_year, e.species))
        hi_e = min(pool, key=lambda e: (-e.slope_days_per_year, e.species))
        lo = (lo_e.species, lo_e.slope_days_per_year)
        hi = (hi_e.species, hi_e.slope_days_per_year)
    return ShiftAggregate(
        n_analyzed=len(analyzed),
        n_filtered=len(ests) - len(analyzed),
        n_significant=counts["earlier"] + counts["later"],
        n_earlier=counts["earlier"],
        n_later=counts["later"],
        n_none=counts["none"],
        mean_shift_days_per_year=mean,
        min_shift=lo,
        max_shift=hi,
        significant_only=significant_only,
    )


@dataclass(frozen=True)
class SpeciesTraits:
    species: str
    nativity: str | None = None
    growth_form: str | None = None
    wetland_status: str | None = None
    mean_flowering_doy: float | None = None
    std_flowering_doy: float | None = None
    n_flowering: int = 0

    @property
    def flowering_duration(self) -> float | None:
        """Spread proxy for flowering duration: twice the DoY standard deviation."""
        if self.std_flowering_doy is None:
            return None
        return 2.0 * self.std_flowering_doy


@dataclass(frozen=True)
class Categorization:
    characteristic: str
    categories: dict[str, str]
    excluded: tuple[str, ...]

    @property
    def excluded_count(self) -> int:
        return len(self.excluded)


def category_of(traits: SpeciesTraits, characteristic: str) -> str | None:
    if characteristic == "growth_form":
        return traits.growth_form
    if characteristic == "nativity":
        return traits.nativity
    if characteristic == "wetland":
        return traits.wetland_status
    if characteristic == "seasonal_timing":
        m = traits.mean_flowering_doy
        if m is None:
            return None
        return "early" if m <= EARLY_SEASON_MAX_DOY else "late"
    if characteristic == "flowering_duration":
        d = traits.flowering_duration
        if d is None:
            return None
        return "narrow" if d <= NARROW_DURATION_MAX_DAYS else "broad"
    raise ValueError(f"unknown characteristic {characteristic!r}")


def categorize_species(
    estimates: Iterable[SpeciesShiftEstimate],
    characteristic: str,
    traits: Mapping[str, SpeciesTraits],
) -> Categorization:
    """Assign each non-filtered species a category; species lacking the trait are excluded."""
    if characteristic not in CHARACTERISTICS:
        raise ValueError(f"unknown characteristic {characteristic!r}")
    cats: dict[str, str] = {}
    excluded = []
    for e in sorted(estimates, key=lambda e: e.species):
        if e.filtered:
            continue
        t = traits.get(e.species)
        cat = None if t is None else category_of(t, characteristic)
        if cat is None:
            excluded.append(e.species)
        else:
            cats[e.species] = cat
    return Categorization(characteristic, cats, tuple(excluded))


@dataclass(frozen=True)
class CategoryComparison:
    category_a: str
    category_b: str
    direction: str  # earlier | later | none: how category_a shifted relative to category_b
    magnitude_days_per_year: float
    p_value: float
    t_stat: float
    df: float
    n_a: int
    n_b: int

    @property
    def comparison(self) -> str:
        return f"{self.category_a} vs {self.category_b}"


@dataclass(frozen=True)
class SubsetReport:
    characteristic: str
    category_means: dict[str, tuple[float, int]]  # category -> (mean shift days/year, n species)
    comparisons: tuple[CategoryComparison, ...]
    skipped: tuple[tuple[str, str, str], ...] = ()  # (category_a, category_b, reason)
    excluded_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "characteristic": self.characteristic,
            "categories": [
                {"category": c, "mean_shift_days_per_year": m, "mean_shift_days_per_decade": 10.0 * m, "n_species": n}
                for c, (m, n) in self.category_means.items()
            ],
            "comparisons": [
                {
                    "characteristic": self.characteristic,
                    "comparison": c.comparison,
                    "direction": c.direction,
                    "magnitude": c.magnitude_days_per_year,
                    "magnitude_days_per_decade": 10.0 * c.magnitude_days_per_year,
                    "p": c.p_value,
                    "t": c.t_stat,
                    "df": c.df,
                    "n_a": c.n_a,
                    "n_b": c.n_b,
                }
                for c in self.comparisons
            ],
            "skipped": [{"comparison": f"{a} vs {b}", "reason": r} for a, b, r in self.skipped],
            "excluded_species": self.excluded_count,
        }


def subset_welch_table(
    estimates: Iterable[SpeciesShiftEstimate],
    categorization: Categorization,
    order: Sequence[str] | None = None,
) -> SubsetReport:
    """Per-category mean shift and Welch tests for every category pair.

    Direction is the sign of (mean of first category - mean of second);
    magnitude is its absolute value in days/year. Pairs where a category has
    fewer than two species are skipped and listed.
    """
    slopes: dict[str, list[float]] = defaultdict(list)
    for e in sorted(estimates, key=lambda e: e.species):
        cat = categorization.categories.get(e.species)
        if cat is None or e.filtered:
            continue
        slopes[cat].append(e.slope_days_per_year)
    cats = [c for c in order if c in slopes] if order else sorted(slopes)
    means = {c: (math.fsum(slopes[c]) / len(slopes[c]), len(slopes[c])) for c in cats}
    rows, skipped = [], []
    for a, b in itertools.combinations(cats, 2):
        if len(slopes[a]) < 2 or len(slopes[b]) < 2:
            skipped.append((a, b, str(TooFewSpecies(
                f"{a}: {len(slopes[a])} species, {b}: {len(slopes[b])} species; need 2 each"))))
            continue
        try:
            w = welch_t_test(slopes[a], slopes[b])
        except ZeroVariance as exc:
            skipped.append((a, b, str(exc)))
            continue
        diff = means[a][0] - means[b][0]
        direction = "earlier" if diff < 0 else "later" if diff > 0 else "none"
        rows.append(CategoryComparison(a, b, direction, abs(diff), w.p_value, w.t_stat, w.df, w.n_a, w.n_b))
    return SubsetReport(categorization.characteristic, means, tuple(rows), tuple(skipped), categorization.excluded_count)


@dataclass(frozen=True)
class TrendErrorRow:
    threshold: float
    species: str
    n_samples: int
    human_slope: float | None
    model_slope: float | None
    slope_error: float | None


def _slope_or_none(obs: Sequence[EventObservation]) -> float | None:
    try:
        return linear_regression([o.year for o in obs], [o.doy for o in obs]).slope
    except (TooFewPoints, DegenerateX):
        return None


def per_threshold_trend_comparison(
    human_observations: Mapping[str, Sequence[EventObservation]],
    model_observations: Mapping[float, Mapping[str, Sequence[EventObservation]]],
    species: Iterable[str],
) -> list[TrendErrorRow]:
    """|model slope - human slope| for every (threshold, species) pair.

    Rows where either side cannot be regressed carry ``slope_error=None``.
    """
    species = sorted(set(species))
    covered = [s for s in species if s in human_observations
               and any(s in m for m in model_observations.values())]
    if not covered:
        raise NoOverlap("no species is covered by both human and model annotations")
    human_slopes = {s: _slope_or_none(human_observations.get(s, ())) for s in species}
    rows = []
    for t in sorted(model_observations):
        by_sp = model_observations[t]
        for s in species:
            obs = by_sp.get(s, ())
            m = _slope_or_none(obs)
            h = human_slopes[s]
            err = None if m is None or h is None else abs(m - h)
            rows.append(TrendErrorRow(t, s, len(obs), h, m, err))
    return rows


# --- bridging annotations to observations ---------------------------------

def observations_from_records(
    records: Sequence[PredictionRecord],
    task: str,
    policy: ThresholdPolicy | float,
    positive_class: int = 1,
    scored: ScoredSet | None = None,
) -> list[EventObservation]:
    """Observations for records accepted at the policy and predicted as the event class."""
    scored = scored if scored is not None else ScoredSet.from_records(records)
    keep = acceptance_mask(scored, policy) & (scored.predicted == positive_class)
    out = []
    for i in np.flatnonzero(keep).tolist():
        rec = records[i]
        if rec.specimen is None:
            continue
        obs = to_event_doy(rec.specimen, task, rec.record_id)
        if obs is not None:
            out.append(obs)
    return out


def truth_observations(records: Sequence[PredictionRecord], task: str, positive_class: int = 1) -> list[EventObservation]:
    """Observations from the records' true labels (e.g. human annotations)."""
    out = []
    for rec in records:
        if rec.true_label != positive_class or rec.specimen is None:
            continue
        obs = to_event_doy(rec.specimen, task, rec.record_id)
        if obs is not None:
            out.append(obs)
    return out


def _mode(values: Iterable[str | None]) -> str | None:
    c = Counter(v for v in values if v is not None)
    if not c:
        return None
    top = max(c.values())
    return min(v for v, k in c.items() if k == top)


def species_traits_from_records(
    records: Sequence[PredictionRecord],
    flowering_observations: Iterable[EventObservation],
) -> dict[str, SpeciesTraits]:
    """Per-species traits: most common metadata value plus flowering DoY mean/std."""
    meta: dict[str, list[SpecimenMeta]] = defaultdict(list)
    for r in records:
        if r.specimen is not None:
            meta[r.specimen.species].append(r.specimen)
    doy = species_mean_doy(group_by_species(flowering_observations, meta.keys()))
    out = {}
    for sp in sorted(meta):
        ms = meta[sp]
        d = doy.get(sp)
        out[sp] = SpeciesTraits(
            sp,
            nativity=_mode(m.nativity for m in ms),
            growth_form=_mode(m.growth_form for m in ms),
            wetland_status=_mode(m.wetland_status for m in ms),
            mean_flowering_doy=d.mean_doy if d else None,
            std_flowering_doy=d.std_doy if d else None,
            n_flowering=d.n if d else 0,
        )
    return out


# --- tabular I/O ------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_shift_csv(estimates: Iterable[SpeciesShiftEstimate], out) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            return write_shift_csv(estimates, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SHIFT_CSV_HEADER)
    for e in sorted(estimates, key=lambda e: e.species):
        w.writerow([e.species, _fmt(e.slope_days_per_year), _fmt(e.slope_days_per_decade),
                    _fmt(e.p_value), e.n, e.n_pre_1950, e.n_post_1950, e.classification])


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return float(s) if s else None


def read_shift_csv(path) -> list[SpeciesShiftEstimate]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SHIFT_CSV_HEADER:
            raise DataError("shift CSV header must be " + ",".join(SHIFT_CSV_HEADER), source=str(path), line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sp, dpy, _dpd, p, n, n_pre, n_post, cls = row
                out.append(SpeciesShiftEstimate(sp, _opt_float(dpy), _opt_float(p), int(n), int(n_pre), int(n_post), cls))
            except ValueError:
                raise DataError("malformed shift row", source=str(path), line=line_no) from None
            if cls not in ("earlier", "later", "none", "filtered"):
                raise DataError(f"unknown class {cls!r}", source=str(path), line=line_no)
    return out


def write_traits_csv(traits: Mapping[str, SpeciesTraits], out) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            return write_traits_csv(traits, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRAITS_CSV_HEADER)
    for sp in sorted(traits):
        t = traits[sp]
        w.writerow([sp, _fmt(t.nativity), _fmt(t.growth_form), _fmt(t.wetland_status),
                    _fmt(t.mean_flowering_doy), _fmt(t.std_flowering_doy), t.n_flowering,
                    _fmt(t.flowering_duration)])


def read_traits_csv(path) -> dict[str, SpeciesTraits]:
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "species" not in reader.fieldnames:
            raise DataError("traits CSV needs a species column", source=str(path), line=1)
        for line_no, row in enumerate(reader, start=2):
            try:
                std = _opt_float(row.get("std_doy") or "")
                if std is None and (row.get("duration") or "").strip():
                    std = float(row["duration"]) / 2.0
                out[row["species"]] = SpeciesTraits(
                    row["species"],
                    nativity=(row.get("nativity") or "").strip() or None,
                    growth_form=(row.get("growth_form") or "").strip() or None,
                    wetland_status=(row.get("wetland") or "").strip() or None,
                    mean_flowering_doy=_opt_float(row.get("mean_doy") or ""),
                    std_flowering_doy=std,
                    n_flowering=int(row.get("n_doy") or 0),
                )
            except ValueError:
                raise DataError("malformed traits row", source=str(path), line=line_no) from None
    return out


def read_reference_csv(path) -> tuple[dict[str, SpeciesDoYEstimate], dict[str, str]]:
    """Reference study table: species,mean_doy,std_doy,n,group."""
    estimates, grouping = {}, {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"species", "mean_doy", "group"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError("reference CSV needs columns species,mean_doy,group", source=str(path), line=1)
        for line_no, row in enumerate(reader, start=2):
            try:
                sp = row["species"]
                mean = _opt_float(row["mean_doy"])
                std = _opt_float(row.get("std_doy") or "")
                n = int(row.get("n") or (0 if mean is None else 1))
                estimates[sp] = SpeciesDoYEstimate(sp, mean, std, n)
                grouping[sp] = normalize_group(row["group"])
            except (ValueError, KeyError):
                raise DataError("malformed reference row", source=str(path), line=line_no) from None
    return estimates, grouping


def write_reference_csv(estimates: Mapping[str, SpeciesDoYEstimate], grouping: Mapping[str, str], out) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            return write_reference_csv(estimates, grouping, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["species", "mean_doy", "std_doy", "n", "group"])
    for sp in sorted(estimates):
        e = estimates[sp]
        w.writerow([sp, _fmt(e.mean_doy), _fmt(e.std_doy), e.n, grouping.get(sp, "")])
