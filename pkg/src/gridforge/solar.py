"""Sun position, a clear-sky beam model and PV module output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

SOLAR_CONSTANT = 1361.0  # W/m2
STC_IRRADIANCE = 1000.0  # W/m2


@dataclass(frozen=True)
class SolarState:
    elevation: float  # degrees
    azimuth: float  # degrees clockwise from north
    timestamp: datetime
    lat: float
    lon: float


@dataclass(frozen=True)
class PvPanelSpec:
    name: str = "Aleo S19.230"
    rated_power: float = 230.0  # W
    area: float = 1.6434  # m2

    @property
    def efficiency(self) -> float:
        return self.rated_power / (self.area * STC_IRRADIANCE)

    def __post_init__(self):
        if not (0.0 < self.efficiency < 0.3):
            raise ValueError(f"implausible module efficiency {self.efficiency:.3f}")


@dataclass(frozen=True)
class ClearSky:
    """Kasten-type beam attenuation with a Linke turbidity factor.

    Diffuse light is a fixed fraction of the horizontal beam irradiance,
    spread isotropically over the sky dome.
    """

    linke_turbidity: float = 3.0
    diffuse_fraction: float = 0.15


def _julian_offset(ts) -> np.ndarray:
    """Days since J2000.0 (2000-01-01 12:00 UTC)."""
    epoch = np.datetime64("2000-01-01T12:00:00")
    arr = np.asarray(ts, dtype="datetime64[s]")
    return (arr - epoch).astype("timedelta64[s]").astype(float) / 86400.0


def _to_utc_naive(t: datetime) -> datetime:
    if t.tzinfo is not None:
        t = t.astimezone(timezone.utc).replace(tzinfo=None)
    return t


def sun_angles(times, lat: float, lon: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (elevation, azimuth) in degrees for UTC datetime64 values.

    Low-precision almanac formulas (mean longitude and anomaly, ecliptic
    longitude, obliquity, sidereal time); good to a few hundredths of a degree
    for 1950-2050 and well inside half a degree up to 2100. No refraction.
    """
    n = _julian_offset(times)
    L = 280.460 + 0.9856474 * n
    g = np.deg2rad(357.528 + 0.9856003 * n)
    lam = np.deg2rad(L + 1.915 * np.sin(g) + 0.020 * np.sin(2 * g))
    eps = np.deg2rad(23.439 - 4e-7 * n)
    ra = np.arctan2(np.cos(eps) * np.sin(lam), np.cos(lam))
    dec = np.arcsin(np.sin(eps) * np.sin(lam))
    gmst_h = 18.697374558 + 24.06570982441908 * n
    lmst = np.deg2rad((gmst_h * 15.0 + lon) % 360.0)
    ha = (lmst - ra + np.pi) % (2 * np.pi) - np.pi
    phi = math.radians(lat)
    sin_el = np.sin(phi) * np.sin(dec) + np.cos(phi) * np.cos(dec) * np.cos(ha)
    el = np.arcsin(np.clip(sin_el, -1.0, 1.0))
    az = np.arctan2(-np.cos(dec) * np.sin(ha), np.sin(dec) * np.cos(phi) - np.cos(dec) * np.sin(phi) * np.cos(ha))
    return np.rad2deg(el), np.rad2deg(az) % 360.0


def hour_angle(t: datetime, lon: float) -> float:
    n = float(_julian_offset([np.datetime64(_to_utc_naive(t))])[0])
    L = 280.460 + 0.9856474 * n
    g = math.radians(357.528 + 0.9856003 * n)
    lam = math.radians(L + 1.915 * math.sin(g) + 0.020 * math.sin(2 * g))
    eps = math.radians(23.439 - 4e-7 * n)
    ra = math.degrees(math.atan2(math.cos(eps) * math.sin(lam), math.cos(lam)))
    lmst = (18.697374558 + 24.06570982441908 * n) * 15.0 + lon
    return (lmst - ra + 180.0) % 360.0 - 180.0


def solar_position(t: datetime, lat: float, lon: float) -> SolarState:
    if not 1950 <= t.year <= 2100:
        raise ValueError(f"timestamp {t} outside 1950-2100")
    el, az = sun_angles([np.datetime64(_to_utc_naive(t))], lat, lon)
    return SolarState(float(el[0]), float(az[0]), t, lat, lon)


def solar_noon(day: datetime, lon: float) -> datetime:
    """UTC instant of the sun's upper transit on the given UTC date."""
    t = datetime(day.year, day.month, day.day, 12) - timedelta(hours=lon / 15.0)
    for _ in range(4):
        t -= timedelta(hours=hour_angle(t, lon) / 15.0)
    return t


def air_mass(elevation_deg):
    """Kasten & Young relative optical air mass."""
    h = np.maximum(np.asarray(elevation_deg, dtype=float), 0.0)
    return 1.0 / (np.sin(np.deg2rad(h)) + 0.50572 * (h + 6.07995) ** -1.6364)


def _rayleigh_depth(m):
    m = np.asarray(m, dtype=float)
    low = 1.0 / (6.6296 + 1.7513 * m - 0.1202 * m**2 + 0.0065 * m**3 - 0.00013 * m**4)
    high = 1.0 / (10.4 + 0.718 * m)
    return np.where(m <= 20.0, low, high)


def extraterrestrial(day_of_year):
    return SOLAR_CONSTANT * (1.0 + 0.033 * np.cos(2 * np.pi * np.asarray(day_of_year) / 365.0))


def clear_sky_dni(elevation_deg, day_of_year, model: ClearSky = ClearSky()):
    el = np.asarray(elevation_deg, dtype=float)
    m = air_mass(el)
    dni = extraterrestrial(day_of_year) * np.exp(-0.8662 * model.linke_turbidity * m * _rayleigh_depth(m))
    return np.where(el > 0.0, dni, 0.0)


def incidence_cosine(elevation, azimuth, tilt, surface_azimuth):
    el, az = np.deg2rad(elevation), np.deg2rad(azimuth)
    b, g = np.deg2rad(tilt), np.deg2rad(surface_azimuth)
    return np.sin(el) * np.cos(b) + np.cos(el) * np.sin(b) * np.cos(az - g)


def plane_of_array(elevation, azimuth, day_of_year, tilt, surface_azimuth, model: ClearSky = ClearSky()):
    el = np.asarray(elevation, dtype=float)
    dni = clear_sky_dni(el, day_of_year, model)
    beam = dni * np.maximum(0.0, incidence_cosine(el, azimuth, tilt, surface_azimuth))
    diffuse = model.diffuse_fraction * dni * np.sin(np.deg2rad(np.maximum(el, 0.0)))
    poa = beam + diffuse * (1.0 + np.cos(np.deg2rad(tilt))) / 2.0
    return np.where(el > 0.0, poa, 0.0)


def pv_power_from_poa(spec: PvPanelSpec, n_modules: int, poa):
    """Array output in W; the rated power caps the irradiance-proportional output.

    area * efficiency equals rated / STC irradiance, written that way so the
    cap binds exactly at 1000 W/m2.
    """
    poa = np.maximum(np.asarray(poa, dtype=float), 0.0)
    return np.minimum(n_modules * spec.rated_power, n_modules * spec.rated_power * poa / STC_IRRADIANCE)


def pv_output(spec: PvPanelSpec, n_modules: int, roof_tilt: float, roof_azimuth: float,
              sun: SolarState, clearsky: ClearSky = ClearSky()) -> float:
    if n_modules < 0:
        raise ValueError("n_modules must be >= 0")
    if sun.elevation <= 0.0:
        return 0.0
    doy = sun.timestamp.timetuple().tm_yday
    poa = plane_of_array(sun.elevation, sun.azimuth, doy, roof_tilt, roof_azimuth, clearsky)
    return float(pv_power_from_poa(spec, n_modules, poa))
