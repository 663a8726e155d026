"""Annual consumption, standard load profile and time-resolved building load."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from zoneinfo import ZoneInfo

import numpy as np

from .geo import USE_CATEGORIES, Building
from .solar import PvPanelSpec

SEASONS = ("winter", "transition", "summer")
DAY_TYPES = ("workday", "saturday", "sunday")
QUARTERS = 96
PROFILE_ENERGY_KWH = 1000


def _dec(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class LoadParams:
    kwh_per_resident: Fraction = Fraction(200)
    kwh_per_m2: Fraction = Fraction(9)
    appliances_per_household: Fraction = Fraction("8.4")
    kwh_per_appliance: Fraction = Fraction(200)
    nonres_rates: dict = field(default_factory=lambda: {
        "childcare": Fraction(22), "school": Fraction(20), "office": Fraction("45.41"),
    })
    power_factor: float = 0.97
    coincidence: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.power_factor <= 1.0:
            raise ValueError("power factor must lie in (0, 1]")
        rates = [self.kwh_per_resident, self.kwh_per_m2, self.appliances_per_household,
                 self.kwh_per_appliance, *self.nonres_rates.values()]
        if any(r <= 0 for r in rates):
            raise ValueError("all consumption rates must be positive")

    @property
    def tan_phi(self) -> float:
        return math.tan(math.acos(self.power_factor))


def annual_consumption(b: Building, params: LoadParams = LoadParams()) -> Fraction:
    """Yearly energy in kWh as an exact rational.

    Each household contributes residents * 200 + area * 9 + 8.4 * 200 kWh;
    non-residential shares add footprint * fraction * specific rate.
    """
    for cat in b.use_mix:
        if cat not in USE_CATEGORIES:
            raise ValueError(f"building {b.id}: unknown use category {cat!r}")
    appliances = params.appliances_per_household * params.kwh_per_appliance
    total = Fraction(0)
    for h in b.households:
        total += h.residents * params.kwh_per_resident + _dec(h.area) * params.kwh_per_m2 + appliances
    for cat, frac in b.use_mix.items():
        if cat == "residential" or not frac:
            continue
        total += _dec(b.footprint_area) * _dec(frac) * params.nonres_rates[cat]
    return total


def equal_households(n_households: int, residents_total: int, living_area_total: float):
    """Split building totals into equally sized households (multi-flat buildings)."""
    from .geo import Household

    if n_households <= 0:
        return ()
    share_area = living_area_total / n_households
    base, extra = divmod(residents_total, n_households)
    return tuple(Household(base + (1 if i < extra else 0), share_area) for i in range(n_households))


def season_of(d) -> str:
    """BDEW convention: winter 1 Nov - 20 Mar, summer 15 May - 14 Sep."""
    md = (d.month, d.day)
    if md >= (11, 1) or md <= (3, 20):
        return "winter"
    if (5, 15) <= md <= (9, 14):
        return "summer"
    return "transition"


def day_type_of(d) -> str:
    wd = d.weekday()
    return "saturday" if wd == 5 else "sunday" if wd == 6 else "workday"


class LoadProfile:
    """Quarter-hourly standard load profile indexed by season, day type and local time.

    Values are watts for a consumer with PROFILE_ENERGY_KWH per year; the
    scale is fixed so that summing over every quarter hour of the reference
    year gives exactly that energy.
    """

    def __init__(self, table: dict[tuple[str, str], np.ndarray], tz: str = "Europe/Berlin",
                 reference_year: int = 2021):
        for s in SEASONS:
            for d in DAY_TYPES:
                arr = np.asarray(table[(s, d)], dtype=float)
                if arr.shape != (QUARTERS,) or np.any(arr < 0):
                    raise ValueError(f"profile block {s}/{d} must hold {QUARTERS} non-negative values")
        self.raw = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.tz = tz
        self.reference_year = reference_year
        self._cube = np.stack([np.stack([self.raw[(s, d)] for d in DAY_TYPES]) for s in SEASONS])
        self.scale = 1.0
        stamps = year_quarter_hours(reference_year)
        energy_kwh = float(np.sum(self.values(stamps))) * 0.25 / 1000.0
        if energy_kwh <= 0:
            raise ValueError("profile has no energy")
        self.scale = PROFILE_ENERGY_KWH / energy_kwh

    def _index(self, stamps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        zone = ZoneInfo(self.tz)
        si, di, qi = [], [], []
        for t in stamps:
            if isinstance(t, np.datetime64):
                t = t.astype("datetime64[s]").astype(datetime)
            if t.tzinfo is None:
                t = t.replace(tzinfo=timezone.utc)
            loc = t.astimezone(zone)
            si.append(SEASONS.index(season_of(loc)))
            di.append(DAY_TYPES.index(day_type_of(loc)))
            qi.append((loc.hour * 60 + loc.minute) // 15)
        return np.asarray(si), np.asarray(di), np.asarray(qi)

    def values(self, stamps) -> np.ndarray:
        """Profile power (W per 1000 kWh/a) at each UTC timestamp."""
        s, d, q = self._index(stamps)
        return self._cube[s, d, q] * self.scale

    def __call__(self, t: datetime) -> float:
        return float(self.values([t])[0])

    @property
    def peak(self) -> float:
        return float(self._cube.max() * self.scale)

    @classmethod
    def synthetic(cls, tz: str = "Europe/Berlin", reference_year: int = 2021) -> "LoadProfile":
        """Household-shaped profile (night trough, morning, midday and evening peaks).

        Not a licensed H0 table; it only reproduces the qualitative shape so the
        pipeline runs without external data.
        """
        h = (np.arange(QUARTERS) + 0.5) / 4.0

        def bump(centre, width, amp):
            return amp * np.exp(-0.5 * ((h - centre) / width) ** 2)

        season_level = {"winter": 1.18, "transition": 1.0, "summer": 0.84}
        evening = {"winter": (18.8, 1.7, 1.25), "transition": (19.6, 1.7, 1.0), "summer": (20.6, 1.6, 0.8)}
        table = {}
        for s in SEASONS:
            for d in DAY_TYPES:
                morning = (7.2, 1.0, 0.55) if d == "workday" else (9.2, 1.4, 0.6)
                noon = (12.6, 1.3, 0.5) if d == "workday" else (12.4, 1.2, 0.85)
                base = 0.42 + 0.1 * np.cos(2 * np.pi * (h - 3.0) / 24.0) ** 2
                curve = base + bump(*morning) + bump(*noon) + bump(*evening[s])
                table[(s, d)] = season_level[s] * curve
        return cls(table, tz, reference_year)

    @classmethod
    def from_csv(cls, path, tz: str = "Europe/Berlin", reference_year: int = 2021) -> "LoadProfile":
        table = {(s, d): np.full(QUARTERS, np.nan) for s in SEASONS for d in DAY_TYPES}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["season"].strip(), row["day_type"].strip())
                if key not in table:
                    raise ValueError(f"{path}: unknown season/day type {key}")
                table[key][int(row["quarter_hour"])] = float(row["value"])
        missing = [k for k, v in table.items() if np.isnan(v).any()]
        if missing:
            raise ValueError(f"{path}: incomplete profile blocks {missing}")
        return cls(table, tz, reference_year)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["season", "day_type", "quarter_hour", "value"])
            for s in SEASONS:
                for d in DAY_TYPES:
                    for q, v in enumerate(self.raw[(s, d)]):
                        w.writerow([s, d, q, repr(float(v))])


def year_quarter_hours(year: int) -> np.ndarray:
    start = np.datetime64(f"{year}-01-01T00:00")
    end = np.datetime64(f"{year + 1}-01-01T00:00")
    return np.arange(start, end, np.timedelta64(15, "m"))


def load_at(b: Building, t: datetime, profile: LoadProfile, params: LoadParams = LoadParams()):
    """Active (W) and reactive (var) consumption of a building at time t."""
    p = float(annual_consumption(b, params)) / PROFILE_ENERGY_KWH * profile(t)
    return p, p * params.tan_phi


def peak_demand_va(b: Building, profile: LoadProfile, params: LoadParams = LoadParams()) -> int:
    """Integer apparent-power demand used for radial topology optimisation.

    Buildings without consumption still get 1 VA so they stay connected.
    """
    p = float(annual_consumption(b, params)) / PROFILE_ENERGY_KWH * profile.peak * params.coincidence
    return max(1, math.ceil(p / params.power_factor - 1e-9))


def future_modules(b: Building, spec: PvPanelSpec, roof_share: str = "0.4") -> int:
    """Modules for full deployment: a share of the roof, capped by the register potential."""
    n = math.floor(Fraction(str(roof_share)) * _dec(b.footprint_area) / _dec(spec.area))
    if b.pv_modules_potential > 0:
        n = min(n, b.pv_modules_potential)
    return max(n, b.pv_modules_installed)


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def quarter_hours(t0: datetime, t1: datetime, step: timedelta = timedelta(minutes=15)) -> list[datetime]:
    out, t = [], t0
    while t < t1:
        out.append(t)
        t += step
    return out
