"""Dataset types, image/weather ingestion, and the synthetic RWIS generator.

The generator is a stand-in for real roadside-camera data: it renders a
procedural road scene (perspective trapezoid, lane line) and overlays snow
whose coverage fraction of the road region is drawn from a per-class range,
then draws class-conditional weather. Everything is deterministic per seed;
every latent draw lands in the ground-truth log.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

CLASS_NAMES = ("bare", "partial", "full")

WEATHER_FIELDS = ("air_temp", "relative_humidity", "pressure", "wind_speed", "dew_point")
# dew point is derivable from air temperature and humidity, so the fusion
# stage uses only these four
FUSION_WEATHER_FIELDS = ("air_temp", "relative_humidity", "pressure", "wind_speed")

GROUND_TRUTH_COLUMNS = (
    "sample_id",
    "station_id",
    "timestamp",
    "label",
    "coverage",
    "ambiguous",
    "air_temp",
    "relative_humidity",
    "pressure",
    "wind_speed",
    "dew_point",
    "rh_null",
    "wind_null",
)

_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
_FILENAME_TS = "%Y%m%dT%H%M%SZ"
_SIDECAR_RE = re.compile(r"^(?P<station>.+)_(?P<ts>\d{8}T\d{6}Z)$")


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(_TS_FORMAT)


def parse_timestamp(text: str) -> datetime:
    try:
        return datetime.strptime(text, _TS_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        return datetime.fromisoformat(text).astimezone(timezone.utc)


@dataclass(frozen=True)
class WeatherRecord:
    """One station observation; any field may be missing (None)."""

    air_temp: float | None = None  # degrees C
    relative_humidity: float | None = None  # percent
    pressure: float | None = None  # kPa
    wind_speed: float | None = None  # km/h
    dew_point: float | None = None  # degrees C

    def __post_init__(self):
        if self.relative_humidity is not None and not 0.0 <= self.relative_humidity <= 100.0:
            raise ValueError(f"relative_humidity {self.relative_humidity} outside [0, 100]")
        if self.pressure is not None and self.pressure <= 0.0:
            raise ValueError(f"pressure must be positive, got {self.pressure}")

    def fusion_vector(self):
        """The four fusion features as float64, NaN where missing."""
        vals = [getattr(self, f) for f in FUSION_WEATHER_FIELDS]
        return np.array([np.nan if v is None else float(v) for v in vals])


@dataclass(frozen=True)
class LabeledSample:
    """One station observation: image, class label, and optional weather."""

    image: np.ndarray  # (S, S, 3) float32 in [0, 1]
    label: int  # 0 = bare, 1 = partial, 2 = full
    station_id: str
    timestamp: datetime | None = None
    weather: WeatherRecord | None = None

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ValueError(f"label must be 0, 1, or 2, got {self.label}")
        img = self.image
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {img.shape}")
        lo, hi = float(img.min()), float(img.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min {lo}, max {hi}")


# Class-conditional weather distributions (mean, std) per class in the order
# of WEATHER_FIELDS; the full-cover class is the coldest. Artifact constructs,
# tuned only so weather is informative about the class.
DEFAULT_WEATHER_MEANS = (
    (1.5, 55.0, 96.6, 12.0, -3.0),
    (-4.0, 70.0, 96.2, 18.0, -9.0),
    (-11.0, 86.0, 95.8, 26.0, -15.0),
)
DEFAULT_WEATHER_STDS = (
    (3.0, 12.0, 0.8, 5.0, 3.0),
    (3.0, 12.0, 0.8, 6.0, 3.0),
    (3.0, 8.0, 0.8, 7.0, 3.0),
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset.

    coverage_ranges gives the snow-coverage interval per class over the road
    region; ambiguity_fraction of full-cover samples are instead rendered
    with coverage in ambiguous_full_range, near the partial/full boundary,
    so their image evidence alone is weak.
    """

    n_samples: int = 1200
    class_priors: tuple[float, float, float] = (0.45, 0.40, 0.15)
    image_size: int = 64
    rh_null_rate: float = 0.017
    wind_null_rate: float = 0.0026
    coverage_ranges: tuple = ((0.0, 0.05), (0.15, 0.6), (0.7, 1.0))
    ambiguous_full_range: tuple[float, float] = (0.50, 0.65)
    ambiguity_fraction: float = 0.0
    noise_sigma: float = 0.05
    n_stations: int = 8
    weather_means: tuple = DEFAULT_WEATHER_MEANS
    weather_stds: tuple = DEFAULT_WEATHER_STDS
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if len(self.class_priors) != 3 or abs(sum(self.class_priors) - 1.0) > 1e-9:
            raise ValueError(f"class_priors must be 3 values summing to 1, got {self.class_priors}")
        if any(p < 0 for p in self.class_priors):
            raise ValueError(f"class_priors must be nonnegative, got {self.class_priors}")
        for rate, name in ((self.rh_null_rate, "rh_null_rate"), (self.wind_null_rate, "wind_null_rate")):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if not 0.0 <= self.ambiguity_fraction <= 1.0:
            raise ValueError(f"ambiguity_fraction must be in [0, 1], got {self.ambiguity_fraction}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {self.image_size}")
        for lo, hi in tuple(self.coverage_ranges) + (self.ambiguous_full_range,):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"coverage range ({lo}, {hi}) invalid")


def road_mask(size: int) -> np.ndarray:
    """Boolean mask of the road trapezoid for a size x size scene."""
    horizon = int(0.25 * size)
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    t = np.clip((ys - horizon) / max(size - 1 - horizon, 1), 0.0, 1.0)
    half_w = (0.06 + 0.40 * t) * size
    mask = (np.abs(xs - (size - 1) / 2.0) <= half_w) & (ys >= horizon)
    return mask


def _box_blur(a, k):
    """Separable mean filter with window 2k+1, edge padded."""
    if k <= 0:
        return a
    w = 2 * k + 1
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (k + 1, k)
        ap = np.pad(a, pad, mode="edge")
        c = np.cumsum(ap, axis=axis, dtype=np.float64)
        if axis == 0:
            a = (c[w:, :] - c[:-w, :]) / w
        else:
            a = (c[:, w:] - c[:, :-w]) / w
    return a


def _render_scene(size, coverage, rng, noise_sigma):
    """Render one road scene with the given snow coverage of the road region.

    Snow falls on the whole scene, not just the pavement: one smooth random
    field is thresholded so that exactly `coverage` of the road-region
    pixels are snow, and the same threshold whitens the surroundings, the
    way a snowy roadside looks.
    """
    mask = road_mask(size)
    value = np.full((size, size), 0.15 + rng.uniform(-0.02, 0.02))
    value[mask] = 0.40 + rng.uniform(-0.03, 0.03)
    # lane line: a center strip from the horizon down, dimmer than snow
    horizon = int(0.25 * size)
    lane_w = max(size // 32, 1)
    c0 = size // 2 - lane_w // 2
    lane = np.zeros_like(mask)
    lane[horizon:, c0 : c0 + lane_w] = True
    value[lane & mask] = 0.55
    if coverage > 0.0:
        field = _box_blur(rng.random((size, size)), max(size // 12, 1))
        field = _box_blur(field, max(size // 16, 1))
        if coverage >= 1.0:
            snow = np.ones_like(mask)
        else:
            thr = np.quantile(field[mask], 1.0 - coverage)
            snow = field >= thr
        value[snow & mask] = 0.88 + rng.uniform(-0.02, 0.02)
        value[snow & ~mask] = 0.80 + rng.uniform(-0.02, 0.02)
    img = np.repeat(value[:, :, None], 3, axis=2)
    img = img + rng.normal(0.0, noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _draw_weather(spec: SyntheticSpec, label: int, rng):
    means = spec.weather_means[label]
    stds = spec.weather_stds[label]
    vals = [rng.normal(m, s) for m, s in zip(means, stds)]
    vals[1] = float(np.clip(vals[1], 0.0, 100.0))  # relative humidity
    vals[2] = max(vals[2], 1.0)  # pressure stays positive
    vals[3] = max(vals[3], 0.0)  # wind speed
    return vals


def generate_synthetic(spec: SyntheticSpec):
    """Generate (samples, ground-truth log) deterministically from the spec.

    The log has one dict per sample (columns GROUND_TRUTH_COLUMNS) recording
    the class draw, rendered coverage, ambiguity flag, the latent weather
    draws before null injection, and which nulls were injected.
    """
    base = datetime(2018, 1, 15, tzinfo=timezone.utc)
    priors = np.asarray(spec.class_priors, dtype=np.float64)
    samples: list[LabeledSample] = []
    log: list[dict] = []
    for i in range(spec.n_samples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(i,)))
        label = int(rng.choice(3, p=priors))
        ambiguous = False
        lo, hi = spec.coverage_ranges[label]
        if label == 2 and spec.ambiguity_fraction > 0.0 and rng.random() < spec.ambiguity_fraction:
            ambiguous = True
            lo, hi = spec.ambiguous_full_range
        coverage = float(rng.uniform(lo, hi))
        image = _render_scene(spec.image_size, coverage, rng, spec.noise_sigma)
        latent = _draw_weather(spec, label, rng)
        rh_null = bool(rng.random() < spec.rh_null_rate)
        wind_null = bool(rng.random() < spec.wind_null_rate)
        weather = WeatherRecord(
            air_temp=latent[0],
            relative_humidity=None if rh_null else latent[1],
            pressure=latent[2],
            wind_speed=None if wind_null else latent[3],
            dew_point=latent[4],
        )
        station = f"ST{i % spec.n_stations:03d}"
        ts = base + timedelta(minutes=15 * (i // spec.n_stations))
        samples.append(
            LabeledSample(image=image, label=label, station_id=station, timestamp=ts, weather=weather)
        )
        log.append(
            {
                "sample_id": i,
                "station_id": station,
                "timestamp": format_timestamp(ts),
                "label": label,
                "coverage": coverage,
                "ambiguous": ambiguous,
                "air_temp": latent[0],
                "relative_humidity": latent[1],
                "pressure": latent[2],
                "wind_speed": latent[3],
                "dew_point": latent[4],
                "rh_null": rh_null,
                "wind_null": wind_null,
            }
        )
    return samples, log


def measured_coverage(sample: LabeledSample, threshold: float = 0.65) -> float:
    """Pixel-counting estimate of snow coverage over the road region."""
    mask = road_mask(sample.image.shape[0])
    road_pixels = sample.image[:, :, 0][mask]
    return float(np.mean(road_pixels > threshold))


def write_dataset(samples, log, out_dir):
    """Write a dataset tree: class folders of PNGs, weather.csv, ground_truth_log.csv."""
    out = Path(out_dir)
    for name in CLASS_NAMES:
        (out / name).mkdir(parents=True, exist_ok=True)
    weather_rows = []
    for i, s in enumerate(samples):
        stem = f"{s.station_id}_{s.timestamp.strftime(_FILENAME_TS)}" if s.timestamp else f"sample{i:06d}"
        path = out / CLASS_NAMES[s.label] / f"{stem}.png"
        arr = np.clip(np.round(s.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(path)
        if s.weather is not None:
            weather_rows.append(
                [s.station_id, format_timestamp(s.timestamp)]
                + ["" if getattr(s.weather, f) is None else repr(getattr(s.weather, f)) for f in WEATHER_FIELDS]
            )
    with open(out / "weather.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "timestamp", "air_temp", "rh", "pressure", "wind_speed", "dew_point"])
        w.writerows(weather_rows)
    if log is not None:
        with open(out / "ground_truth_log.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GROUND_TRUTH_COLUMNS)
            for row in log:
                w.writerow([row[c] for c in GROUND_TRUTH_COLUMNS])
    return out


def load_image_dataset(root, input_size: int = 224):
    """Load a class-folder image tree into LabeledSamples.

    Images are decoded as 8-bit RGB, resized to input_size with bilinear
    interpolation, and scaled to [0, 1]. Files are visited in lexicographic
    order per class folder. Unreadable files are skipped with a warning and
    counted; an empty (or missing) class folder is an error.
    """
    root = Path(root)
    empty = [name for name in CLASS_NAMES if not any((root / name).glob("*")) ]
    if empty:
        raise ValueError(f"empty class directories under {root}: {', '.join(empty)}")
    samples = []
    skipped = 0
    for label, name in enumerate(CLASS_NAMES):
        for path in sorted((root / name).iterdir()):
            if not path.is_file():
                continue
            try:
                with Image.open(path) as im:
                    im = im.convert("RGB")
                    if im.size != (input_size, input_size):
                        im = im.resize((input_size, input_size), Image.BILINEAR)
                    arr = np.asarray(im, dtype=np.float32) / 255.0
            except Exception as exc:  # unreadable/corrupt file
                logger.warning("skipping unreadable image %s: %s", path, exc)
                skipped += 1
                continue
            station, ts = _parse_sidecar_name(path.stem)
            samples.append(
                LabeledSample(image=arr, label=label, station_id=station, timestamp=ts)
            )
    if skipped:
        logger.warning("skipped %d unreadable image file(s) under %s", skipped, root)
    return samples


def _parse_sidecar_name(stem: str):
    m = _SIDECAR_RE.match(stem)
    if not m:
        return stem, None
    try:
        ts = datetime.strptime(m.group("ts"), _FILENAME_TS).replace(tzinfo=timezone.utc)
    except ValueError:
        return stem, None
    return m.group("station"), ts


def read_weather_csv(path):
    """Parse a weather CSV into {station_id: [(timestamp, WeatherRecord), ...]} sorted by time.

    Columns: station_id, timestamp, air_temp, rh, pressure, wind_speed,
    dew_point; empty fields are nulls. Malformed rows are rejected with
    their line number.
    """
    by_station: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return by_station
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ValueError(f"{path}: line {lineno}: expected 7 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[1])
                vals = [None if cell == "" else float(cell) for cell in row[2:7]]
                rec = WeatherRecord(*vals)
            except (ValueError, OverflowError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            by_station.setdefault(row[0], []).append((ts, rec))
    for recs in by_station.values():
        recs.sort(key=lambda tr: tr[0])
    return by_station


def join_weather(samples, weather_csv, window_minutes: float = 7.5):
    """Attach to each sample the same-station record nearest in time.

    A record qualifies only within +/- window_minutes (half the 15-minute
    station cadence by default); exact distance ties go to the earlier
    record. Returns (new samples, unmatched count).
    """
    by_station = read_weather_csv(weather_csv)
    window = timedelta(minutes=window_minutes)
    joined = []
    unmatched = 0
    for s in samples:
        best = None
        if s.timestamp is not None:
            for ts, rec in by_station.get(s.station_id, ()):
                dist = abs(ts - s.timestamp)
                if dist <= window and (best is None or dist < best[0] or (dist == best[0] and ts < best[1])):
                    best = (dist, ts, rec)
        if best is None:
            unmatched += 1
            joined.append(replace(s, weather=None))
        else:
            joined.append(replace(s, weather=best[2]))
    if unmatched:
        logger.info("join_weather: %d sample(s) had no record within the window", unmatched)
    return joined, unmatched


@dataclass(frozen=True)
class DatasetSummary:
    """Descriptive statistics of a sample list."""

    n_samples: int
    class_counts: tuple[int, int, int]
    weather_missing: int
    null_rates: tuple[float, ...]  # per FUSION_WEATHER_FIELDS + dew_point
    feature_means: tuple[float, ...]
    feature_stds: tuple[float, ...]

    @property
    def class_shares(self):
        return tuple(c / self.n_samples for c in self.class_counts)

    def to_csv_text(self) -> str:
        lines = ["key,value"]
        lines.append(f"n_samples,{self.n_samples}")
        for name, c in zip(CLASS_NAMES, self.class_counts):
            lines.append(f"count_{name},{c}")
        lines.append(f"weather_missing,{self.weather_missing}")
        for name, r in zip(WEATHER_FIELDS, self.null_rates):
            lines.append(f"null_rate_{name},{r!r}")
        for name, m in zip(WEATHER_FIELDS, self.feature_means):
            lines.append(f"mean_{name},{m!r}")
        for name, s in zip(WEATHER_FIELDS, self.feature_stds):
            lines.append(f"std_{name},{s!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "DatasetSummary":
        kv = {}
        for line in text.strip().splitlines()[1:]:
            key, value = line.split(",", 1)
            kv[key] = value
        return cls(
            n_samples=int(kv["n_samples"]),
            class_counts=tuple(int(kv[f"count_{n}"]) for n in CLASS_NAMES),
            weather_missing=int(kv["weather_missing"]),
            null_rates=tuple(float(kv[f"null_rate_{n}"]) for n in WEATHER_FIELDS),
            feature_means=tuple(float(kv[f"mean_{n}"]) for n in WEATHER_FIELDS),
            feature_stds=tuple(float(kv[f"std_{n}"]) for n in WEATHER_FIELDS),
        )


def dataset_summary(samples) -> DatasetSummary:
    """Counts per class, per-feature null rates, and weather means/stds."""
    if not samples:
        raise ValueError("dataset_summary needs at least one sample")
    counts = [0, 0, 0]
    missing = 0
    values: list[list[float]] = [[] for _ in WEATHER_FIELDS]
    nulls = [0 for _ in WEATHER_FIELDS]
    present = 0
    for s in samples:
        counts[s.label] += 1
        if s.weather is None:
            missing += 1
            continue
        present += 1
        for j, f in enumerate(WEATHER_FIELDS):
            v = getattr(s.weather, f)
            if v is None:
                nulls[j] += 1
            else:
                values[j].append(v)
    null_rates = tuple(n / present if present else 0.0 for n in nulls)
    means = tuple(float(np.mean(v)) if v else 0.0 for v in values)
    stds = tuple(float(np.std(v)) if v else 0.0 for v in values)
    return DatasetSummary(
        n_samples=len(samples),
        class_counts=tuple(counts),
        weather_missing=missing,
        null_rates=null_rates,
        feature_means=means,
        feature_stds=stds,
    )
