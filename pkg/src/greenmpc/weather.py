"""Weather ingestion, solar geometry, and forecast-error extraction.

Two file kinds feed the toolkit.  A measurement CSV holds the hourly truth
with the short-lead forecast paired to each hour; a forecast CSV holds full
multi-lead forecasts, one row per lead, keyed by issuance time.  Forecast
errors (measured minus forecast) are assembled per issuance into horizon
vectors, which are the raw material for uncertainty-set learning.

Solar radiation is reconstructed from cloud cover via a clear-sky model
attenuated by total cloudiness in okta, the same path for measured and
forecast values unless an instrument column is present.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

HOUR = 3600
TEMPERATURE = "temperature"
SOLAR = "solar"
CHANNELS = (SOLAR, TEMPERATURE)  # order matches the model's error vector w

TRUTH_COLUMNS = ("timestamp_utc", "temp_measured_c", "temp_forecast_c",
                 "cloud_okta_forecast", "solar_measured_wm2")
FORECAST_COLUMNS = ("issued_at", "timestamp_utc", "temp_forecast_c",
                    "cloud_okta_forecast")


class WeatherDataError(ValueError):
    """Malformed or insufficient weather data."""


# --- time helpers -----------------------------------------------------------

def parse_timestamp(value: str | int | float) -> int:
    """ISO-8601 string (UTC assumed) or unix seconds -> unix seconds."""
    if isinstance(value, (int, float)):
        return int(value)
    text = value.strip()
    if text.replace("-", "", 1).isdigit():
        return int(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --- solar geometry ---------------------------------------------------------

def solar_elevation(timestamp: int | float, latitude: float, longitude: float) -> float:
    """Geometric solar elevation in degrees (no refraction), +/-0.5 deg class.

    Low-precision broadcast ephemeris: declination and equation of time from
    a truncated Fourier series in the fractional year, then the standard
    hour-angle formula.  Longitude is east-positive.
    """
    dt = datetime.fromtimestamp(float(timestamp), tz=timezone.utc)
    doy = dt.timetuple().tm_yday
    hour = dt.hour + dt.minute / 60.0 + dt.second / 3600.0
    gamma = 2.0 * math.pi / 365.0 * (doy - 1 + (hour - 12.0) / 24.0)

    decl = (0.006918 - 0.399912 * math.cos(gamma) + 0.070257 * math.sin(gamma)
            - 0.006758 * math.cos(2 * gamma) + 0.000907 * math.sin(2 * gamma)
            - 0.002697 * math.cos(3 * gamma) + 0.00148 * math.sin(3 * gamma))
    eqtime = 229.18 * (0.000075 + 0.001868 * math.cos(gamma) - 0.032077 * math.sin(gamma)
                       - 0.014615 * math.cos(2 * gamma) - 0.040849 * math.sin(2 * gamma))

    tst = hour * 60.0 + eqtime + 4.0 * longitude  # true solar time, minutes
    ha = math.radians(tst / 4.0 - 180.0)
    lat = math.radians(latitude)
    cos_zenith = (math.sin(lat) * math.sin(decl)
                  + math.cos(lat) * math.cos(decl) * math.cos(ha))
    cos_zenith = min(1.0, max(-1.0, cos_zenith))
    return 90.0 - math.degrees(math.acos(cos_zenith))


def clear_sky_insolation(elev_begin_deg: float, elev_end_deg: float) -> float:
    """Clear-sky irradiance (W/m^2) for an interval from its endpoint elevations.

    Sine-of-elevation model at the interval midpoint elevation, floored at
    zero so night intervals contribute nothing.
    """
    mid = 0.5 * (elev_begin_deg + elev_end_deg)
    if mid <= 0.0:
        return 0.0
    return max(0.0, 990.0 * math.sin(math.radians(mid)) - 30.0)


def solar_from_cloud(clear_sky_wm2: float, okta: float) -> float:
    """Attenuate clear-sky irradiance by total cloud cover in okta (0-8)."""
    if not (0.0 <= okta <= 8.0):
        raise WeatherDataError(f"cloud cover must be within [0, 8] okta, got {okta!r}")
    return clear_sky_wm2 * (1.0 - 0.75 * (okta / 8.0) ** 3.4)


def cloud_from_solar(clear_sky_wm2: float, solar_wm2: float) -> float:
    """Inverse of solar_from_cloud, clipped into the representable range."""
    if clear_sky_wm2 <= 0.0:
        return 0.0
    factor = min(1.0, max(0.25, solar_wm2 / clear_sky_wm2))
    return 8.0 * ((1.0 - factor) / 0.75) ** (1.0 / 3.4)


def hourly_clear_sky(timestamp: int, latitude: float, longitude: float) -> float:
    """Clear-sky irradiance for the hour starting at `timestamp`."""
    return clear_sky_insolation(
        solar_elevation(timestamp, latitude, longitude),
        solar_elevation(timestamp + HOUR, latitude, longitude),
    )


# --- data model --------------------------------------------------------------

@dataclass(frozen=True)
class WeatherRecord:
    timestamp: int
    temp_measured_c: float
    temp_forecast_c: float
    cloud_okta_forecast: float
    solar_measured_wm2: float | None
    latitude: float
    longitude: float


@dataclass(frozen=True)
class ForecastEntry:
    valid_time: int
    temp_forecast_c: float
    cloud_okta_forecast: float


@dataclass
class WeatherSeries:
    """Hourly truth series on an aligned grid; gaps are missing hours."""

    records: list[WeatherRecord]
    latitude: float
    longitude: float
    _by_time: dict[int, WeatherRecord] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        last = None
        for rec in self.records:
            if rec.timestamp % HOUR != 0:
                raise WeatherDataError(
                    f"timestamp {format_timestamp(rec.timestamp)} is not hour-aligned")
            if last is not None and rec.timestamp <= last:
                raise WeatherDataError("timestamps must be strictly increasing")
            last = rec.timestamp
            self._by_time[rec.timestamp] = rec

    def at(self, timestamp: int) -> WeatherRecord | None:
        return self._by_time.get(int(timestamp))

    def covers(self, t_begin: int, t_end: int) -> bool:
        return all((t in self._by_time) for t in range(int(t_begin), int(t_end), HOUR))

    def timestamps(self) -> list[int]:
        return [rec.timestamp for rec in self.records]

    def solar_measured(self, timestamp: int) -> float:
        """Measured irradiance for the hour at `timestamp`.

        Falls back to deriving from the record's cloud value through the
        clear-sky model when no instrument column was provided.
        """
        rec = self.at(timestamp)
        if rec is None:
            raise WeatherDataError(f"no record at {format_timestamp(timestamp)}")
        if rec.solar_measured_wm2 is not None:
            return rec.solar_measured_wm2
        r0 = hourly_clear_sky(rec.timestamp, self.latitude, self.longitude)
        return solar_from_cloud(r0, rec.cloud_okta_forecast)


@dataclass
class ForecastTable:
    """issued_at -> leads, each a contiguous hourly run of ForecastEntry."""

    entries: dict[int, list[ForecastEntry]]

    def leads(self, issued_at: int, horizon: int) -> list[ForecastEntry] | None:
        """The first `horizon` hourly leads of one issuance, or None if incomplete."""
        rows = self.entries.get(int(issued_at))
        if rows is None:
            return None
        wanted = {issued_at + (k + 1) * HOUR: None for k in range(horizon)}
        by_valid = {e.valid_time: e for e in rows}
        out = []
        for t in wanted:
            if t not in by_valid:
                return None
            out.append(by_valid[t])
        return out

    def issuances(self) -> list[int]:
        return sorted(self.entries)


@dataclass
class WeatherDataset:
    series: WeatherSeries
    forecasts: ForecastTable


# --- CSV I/O -----------------------------------------------------------------

def _normalize_okta(values: list[float]) -> list[float]:
    """Accept okta (0-8) or fractional (0-1) cloud cover; store okta.

    A file whose maximum is <= 1 is treated as fractional.  Mixed units in a
    single file cannot be told apart and are the caller's responsibility.
    """
    finite = [v for v in values if math.isfinite(v)]
    scale = 8.0 if (finite and max(finite) <= 1.0) else 1.0
    out = []
    for v in values:
        v = v * scale
        if not math.isfinite(v) or not (0.0 <= v <= 8.0):
            raise WeatherDataError(f"cloud cover out of range after normalization: {v!r}")
        out.append(v)
    return out


def load_weather_csv(path: str | Path, latitude: float, longitude: float) -> WeatherSeries:
    """Load the hourly truth CSV (header must match TRUTH_COLUMNS)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRUTH_COLUMNS:
            raise WeatherDataError(
                f"expected header {','.join(TRUTH_COLUMNS)}, got {reader.fieldnames}")
        raw = list(reader)
    if not raw:
        raise WeatherDataError(f"no rows in {path}")
    okta = _normalize_okta([float(row["cloud_okta_forecast"]) for row in raw])
    records = []
    for row, cloud in zip(raw, okta):
        solar_text = (row["solar_measured_wm2"] or "").strip()
        records.append(WeatherRecord(
            timestamp=parse_timestamp(row["timestamp_utc"]),
            temp_measured_c=float(row["temp_measured_c"]),
            temp_forecast_c=float(row["temp_forecast_c"]),
            cloud_okta_forecast=cloud,
            solar_measured_wm2=float(solar_text) if solar_text else None,
            latitude=latitude,
            longitude=longitude,
        ))
        if not math.isfinite(records[-1].temp_measured_c):
            raise WeatherDataError(f"non-finite temperature at {row['timestamp_utc']}")
    return WeatherSeries(records=records, latitude=latitude, longitude=longitude)


def save_weather_csv(series: WeatherSeries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for rec in series.records:
            solar = "" if rec.solar_measured_wm2 is None else repr(rec.solar_measured_wm2)
            writer.writerow([format_timestamp(rec.timestamp), repr(rec.temp_measured_c),
                             repr(rec.temp_forecast_c), repr(rec.cloud_okta_forecast), solar])


def load_forecast_csv(path: str | Path) -> ForecastTable:
    """Load the multi-lead forecast CSV (header must match FORECAST_COLUMNS)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != FORECAST_COLUMNS:
            raise WeatherDataError(
                f"expected header {','.join(FORECAST_COLUMNS)}, got {reader.fieldnames}")
        raw = list(reader)
    if not raw:
        raise WeatherDataError(f"no rows in {path}")
    okta = _normalize_okta([float(row["cloud_okta_forecast"]) for row in raw])
    table: dict[int, list[ForecastEntry]] = {}
    for row, cloud in zip(raw, okta):
        issued = parse_timestamp(row["issued_at"])
        table.setdefault(issued, []).append(ForecastEntry(
            valid_time=parse_timestamp(row["timestamp_utc"]),
            temp_forecast_c=float(row["temp_forecast_c"]),
            cloud_okta_forecast=cloud,
        ))
    for issued, rows in table.items():
        rows.sort(key=lambda e: e.valid_time)
        if len({e.valid_time for e in rows}) != len(rows):
            raise WeatherDataError(
                f"duplicate lead for issuance {format_timestamp(issued)}")
    return ForecastTable(entries=table)


def save_forecast_csv(table: ForecastTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FORECAST_COLUMNS)
        for issued in table.issuances():
            for e in table.entries[issued]:
                writer.writerow([format_timestamp(issued), format_timestamp(e.valid_time),
                                 repr(e.temp_forecast_c), repr(e.cloud_okta_forecast)])


# --- forecast-error extraction ------------------------------------------------

@dataclass
class GapReport:
    n_issuances: int = 0
    n_samples: int = 0
    n_skipped: int = 0
    missing_truth: int = 0
    missing_forecast: int = 0
    skipped_issuances: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_issuances": self.n_issuances,
            "n_samples": self.n_samples,
            "n_skipped": self.n_skipped,
            "missing_truth": self.missing_truth,
            "missing_forecast": self.missing_forecast,
            "skipped_issuances": [format_timestamp(t) for t in self.skipped_issuances[:50]],
        }


@dataclass
class ErrorSampleSet:
    """Per-issuance forecast-error vectors, one row per issuance, one column per lead."""

    channel: str
    horizon: int
    samples: np.ndarray
    issued_at: np.ndarray
    gap_report: GapReport


def forecast_solar(entry: ForecastEntry, latitude: float, longitude: float) -> float:
    r0 = hourly_clear_sky(entry.valid_time, latitude, longitude)
    return solar_from_cloud(r0, entry.cloud_okta_forecast)


def extract_errors(dataset: WeatherDataset, horizon: int, channel: str) -> ErrorSampleSet:
    """Build measured-minus-forecast error vectors for one channel.

    Windows with missing truth hours or incomplete forecast leads are skipped
    and tallied in the gap report rather than raising.
    """
    if channel not in CHANNELS:
        raise WeatherDataError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
    if horizon < 1:
        raise WeatherDataError(f"horizon must be >= 1, got {horizon}")
    series = dataset.series
    report = GapReport()
    rows: list[np.ndarray] = []
    issued: list[int] = []
    for t in dataset.forecasts.issuances():
        report.n_issuances += 1
        leads = dataset.forecasts.leads(t, horizon)
        if leads is None:
            report.n_skipped += 1
            report.missing_forecast += 1
            report.skipped_issuances.append(t)
            continue
        if not series.covers(t + HOUR, t + (horizon + 1) * HOUR):
            report.n_skipped += 1
            report.missing_truth += 1
            report.skipped_issuances.append(t)
            continue
        vec = np.empty(horizon)
        for k, entry in enumerate(leads):
            rec = series.at(entry.valid_time)
            if channel == TEMPERATURE:
                vec[k] = rec.temp_measured_c - entry.temp_forecast_c
            else:
                measured = series.solar_measured(entry.valid_time)
                vec[k] = measured - forecast_solar(entry, series.latitude, series.longitude)
        rows.append(vec)
        issued.append(t)
    report.n_samples = len(rows)
    samples = np.array(rows) if rows else np.zeros((0, horizon))
    return ErrorSampleSet(channel=channel, horizon=horizon, samples=samples,
                          issued_at=np.array(issued, dtype=np.int64), gap_report=report)


def split_samples(samples: np.ndarray, n_calib: int, seed: int,
                  eps: float | None = None, beta: float | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffle, then the last n_calib rows become calibration.

    When eps and beta are given, n_calib is checked against the finite-sample
    guarantee bound and rejected with the required count if too small.
    """
    samples = np.asarray(samples, dtype=float)
    if eps is not None and beta is not None:
        from .uncertainty import required_calibration_count
        needed = required_calibration_count(eps, beta)
        if n_calib < needed:
            raise WeatherDataError(
                f"{n_calib} calibration samples are insufficient: the guarantee at "
                f"eps={eps}, beta={beta} requires at least {needed}")
    if n_calib < 1:
        raise WeatherDataError(f"n_calib must be >= 1, got {n_calib}")
    if samples.shape[0] <= n_calib:
        raise WeatherDataError(
            f"need more than {n_calib} samples to keep a training set, "
            f"got {samples.shape[0]}")
    order = np.random.default_rng(seed).permutation(samples.shape[0])
    shuffled = samples[order]
    return shuffled[:-n_calib], shuffled[-n_calib:]


# --- synthetic weather ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticWeatherConfig:
    """Diurnal sinusoid truth plus AR(1) forecast errors, drawn per issuance.

    Error chains are stationary across leads (variance sigma^2, lag-k
    correlation rho^k) and independent across issuances.  Optional clipping
    bounds every lead, which the bounded-noise scenarios rely on.
    """

    start: int
    days: int
    latitude: float = 40.68
    longitude: float = -73.94
    horizon: int = 5
    temp_mean_c: float = 2.0
    temp_amplitude_c: float = 6.0
    temp_peak_hour_utc: float = 20.0
    cloud_mean_okta: float = 4.0
    cloud_amplitude_okta: float = 3.0
    cloud_period_h: float = 30.0
    ar1_rho: float = 0.6
    temp_sigma_c: float = 0.5
    temp_bias_c: float = 0.0
    temp_clip_c: float | None = None
    solar_sigma_wm2: float = 10.0
    solar_bias_wm2: float = 0.0
    solar_clip_wm2: float | None = None
    seed: int = 0


def _truth_temperature(cfg: SyntheticWeatherConfig, ts: int) -> float:
    hour = (ts % 86400) / 3600.0
    phase = 2.0 * math.pi * (hour - cfg.temp_peak_hour_utc) / 24.0
    return cfg.temp_mean_c + cfg.temp_amplitude_c * math.cos(phase)


def _truth_cloud(cfg: SyntheticWeatherConfig, ts: int) -> float:
    phase = 2.0 * math.pi * ts / (cfg.cloud_period_h * 3600.0)
    return min(8.0, max(0.0, cfg.cloud_mean_okta + cfg.cloud_amplitude_okta * math.sin(phase)))


def _ar1_chain(rng: np.random.Generator, n: int, rho: float, sigma: float,
               bias: float, clip: float | None) -> np.ndarray:
    z = rng.standard_normal(n)
    w = np.empty(n)
    w[0] = sigma * z[0]
    scale = sigma * math.sqrt(max(0.0, 1.0 - rho * rho))
    for k in range(1, n):
        w[k] = rho * w[k - 1] + scale * z[k]
    w = w + bias
    if clip is not None:
        w = np.clip(w, -clip, clip)
    return w


def make_synthetic_dataset(cfg: SyntheticWeatherConfig) -> WeatherDataset:
    """Generate a coupled truth series and multi-lead forecast table."""
    if cfg.days < 1 or cfg.horizon < 1:
        raise WeatherDataError("days and horizon must be >= 1")
    t0 = int(cfg.start) - int(cfg.start) % HOUR
    n_hours = cfg.days * 24 + cfg.horizon  # truth extends H hours past the period
    times = [t0 + k * HOUR for k in range(n_hours)]

    truth_temp = {t: _truth_temperature(cfg, t) for t in times}
    truth_cloud = {t: _truth_cloud(cfg, t) for t in times}
    clear = {t: hourly_clear_sky(t, cfg.latitude, cfg.longitude) for t in times}
    truth_solar = {t: solar_from_cloud(clear[t], truth_cloud[t]) for t in times}

    seq = np.random.SeedSequence(cfg.seed)
    rng_temp, rng_solar = (np.random.default_rng(s) for s in seq.spawn(2))

    entries: dict[int, list[ForecastEntry]] = {}
    lead1_temp: dict[int, float] = {}
    lead1_cloud: dict[int, float] = {}
    for t in times[:cfg.days * 24]:
        w_temp = _ar1_chain(rng_temp, cfg.horizon, cfg.ar1_rho, cfg.temp_sigma_c,
                            cfg.temp_bias_c, cfg.temp_clip_c)
        w_solar = _ar1_chain(rng_solar, cfg.horizon, cfg.ar1_rho, cfg.solar_sigma_wm2,
                             cfg.solar_bias_wm2, cfg.solar_clip_wm2)
        rows = []
        for k in range(cfg.horizon):
            valid = t + (k + 1) * HOUR
            temp_fc = truth_temp[valid] - w_temp[k]
            r0 = clear[valid]
            if r0 > 0.0:
                target = truth_solar[valid] - w_solar[k]
                okta_fc = cloud_from_solar(r0, target)
            else:
                okta_fc = truth_cloud[valid]
            rows.append(ForecastEntry(valid_time=valid, temp_forecast_c=temp_fc,
                                      cloud_okta_forecast=okta_fc))
            if k == 0:
                lead1_temp[valid] = temp_fc
                lead1_cloud[valid] = okta_fc
        entries[t] = rows

    records = []
    for t in times:
        records.append(WeatherRecord(
            timestamp=t,
            temp_measured_c=truth_temp[t],
            temp_forecast_c=lead1_temp.get(t, truth_temp[t]),
            cloud_okta_forecast=lead1_cloud.get(t, truth_cloud[t]),
            solar_measured_wm2=truth_solar[t],
            latitude=cfg.latitude,
            longitude=cfg.longitude,
        ))
    series = WeatherSeries(records=records, latitude=cfg.latitude, longitude=cfg.longitude)
    return WeatherDataset(series=series, forecasts=ForecastTable(entries=entries))
