"""Spectrum datasets: synthetic generation, sparsity, splits and file I/O.

On disk a dataset is a directory holding ``manifest.json`` and one binary
file per sample. A sample file is a 16-byte header (``b"GCMS"``, format
version, T, F as little-endian u32) followed by T*F little-endian float64
values in row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgumentError, ParseError, SchemaError

ZERO_TOL = 1e-15
MAGIC = b"GCMS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass
class SpectrumSample:
    intensities: np.ndarray
    labels: np.ndarray
    sample_id: str

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.intensities.ndim != 2:
            raise SchemaError(f"{self.sample_id}: intensities must be T x F")
        if not np.all(np.isfinite(self.intensities)) or np.any(self.intensities < 0):
            raise SchemaError(f"{self.sample_id}: intensities must be finite and non-negative")
        if self.labels.ndim != 1 or not np.all((self.labels == 0) | (self.labels == 1)):
            raise SchemaError(f"{self.sample_id}: labels must be a binary vector")


@dataclass
class Dataset:
    samples: list
    t_dim: int
    f_dim: int
    class_names: list

    def __post_init__(self):
        for s in self.samples:
            if s.intensities.shape != (self.t_dim, self.f_dim):
                raise SchemaError(f"{s.sample_id}: shape {s.intensities.shape} != ({self.t_dim}, {self.f_dim})")
            if s.labels.shape != (len(self.class_names),):
                raise SchemaError(f"{s.sample_id}: {s.labels.size} labels for {len(self.class_names)} classes")

    def __len__(self):
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def ids(self) -> list:
        return [s.sample_id for s in self.samples]

    def intensities(self) -> np.ndarray:
        return np.stack([s.intensities for s in self.samples]) if self.samples else np.zeros((0, self.t_dim, self.f_dim))

    def labels(self) -> np.ndarray:
        return np.stack([s.labels for s in self.samples]) if self.samples else np.zeros((0, self.n_classes), np.int64)

    def elements(self) -> np.ndarray:
        """All data elements (m/z vectors) stacked as a (samples*T) x F matrix."""
        return self.intensities().reshape(-1, self.f_dim)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], self.t_dim, self.f_dim, list(self.class_names))


def sparsity_ratio(x) -> float:
    a = np.asarray(x)
    if a.size == 0:
        raise InvalidArgumentError("sparsity of an empty array is undefined")
    return float(np.count_nonzero(np.abs(a) < ZERO_TOL)) / a.size


# -- synthetic spectra ----------------------------------------------------


@dataclass
class SyntheticSpec:
    n_samples: int = 96
    t_dim: int = 128
    f_dim: int = 48
    n_classes: int = 6
    target_sparsity: float = 0.80
    peaks_per_class: int = 4
    noise_scale: float = 0.1
    rt_jitter: int = 3
    max_labels: int = 3
    background_peaks: int = 16
    presence_prob: float = 0.6
    amplitude_spread: float = 0.7
    bleed_channels: int = 2
    bleed_level: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ("n_samples", "t_dim", "f_dim", "n_classes", "peaks_per_class", "max_labels"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be a positive count")
        if not 0.0 < self.target_sparsity < 1.0:
            raise InvalidArgumentError(f"target_sparsity must be in (0, 1), got {self.target_sparsity}")
        if self.noise_scale < 0 or self.rt_jitter < 0 or self.amplitude_spread < 0:
            raise InvalidArgumentError("noise_scale, rt_jitter and amplitude_spread must be non-negative")
        if self.background_peaks < 0 or self.bleed_level < 0:
            raise InvalidArgumentError("background_peaks and bleed_level must be non-negative")
        if not 0 <= self.bleed_channels <= self.f_dim:
            raise InvalidArgumentError("bleed_channels must be in [0, f_dim]")
        if not 0.0 < self.presence_prob <= 1.0:
            raise InvalidArgumentError("presence_prob must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**d)


def _truncated_gauss(grid, center, sigma, cutoff=1e-3):
    g = np.exp(-0.5 * ((grid - center) / sigma) ** 2)
    g[g < cutoff] = 0.0
    return g


def _peak_template(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    # One compound: Gaussian elution profile times a few narrow m/z lines.
    t_grid = np.arange(spec.t_dim, dtype=np.float64)
    f_grid = np.arange(spec.f_dim, dtype=np.float64)
    t0 = rng.uniform(0.1, 0.9) * (spec.t_dim - 1)
    sigma_t = rng.uniform(1.5, 4.0)
    n_lines = int(rng.integers(3, 7))
    lines = rng.choice(spec.f_dim, size=min(n_lines, spec.f_dim), replace=False)
    rel = rng.uniform(0.2, 1.0, size=lines.size)
    rel[0] = 1.0
    mz = np.zeros(spec.f_dim)
    for centre, h in zip(lines, rel):
        mz = np.maximum(mz, h * _truncated_gauss(f_grid, centre, 0.5))
    amp = rng.uniform(0.5, 1.5)
    return amp * np.outer(_truncated_gauss(t_grid, t0, sigma_t), mz)


def class_templates(spec: SyntheticSpec, rng: np.random.Generator) -> list:
    """Per class, a list of ``peaks_per_class`` T x F compound templates."""
    return [[_peak_template(spec, rng) for _ in range(spec.peaks_per_class)] for _ in range(spec.n_classes)]


def _shift_rows(a, shift):
    if shift == 0:
        return a
    out = np.zeros_like(a)
    if shift > 0:
        out[shift:] = a[:-shift]
    else:
        out[:shift] = a[-shift:]
    return out


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Seeded pattern-sparse multi-label spectra.

    Each sample carries 1..max_labels labels. Every compound of a labelled
    class shows up with probability ``presence_prob``, with a log-normal
    amplitude and a random retention shift; ``background_peaks`` compounds
    unrelated to any label appear in every sample, and ``bleed_channels``
    m/z channels carry a baseline rising along the time axis (column bleed
    under the oven ramp), so no scan is entirely empty. Non-negative noise is
    added, then the smallest values are zeroed dataset-wide so the overall
    sparsity hits ``target_sparsity``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    templates = class_templates(spec, rng)
    background = [_peak_template(spec, rng) for _ in range(spec.background_peaks)]
    bleed = np.zeros((spec.t_dim, spec.f_dim))
    if spec.bleed_channels:
        ramp = spec.bleed_level * (0.5 + np.arange(spec.t_dim) / spec.t_dim)
        bleed[:, rng.choice(spec.f_dim, size=spec.bleed_channels, replace=False)] = ramp[:, None]

    def draw(tpl):
        shift = int(rng.integers(-spec.rt_jitter, spec.rt_jitter + 1)) if spec.rt_jitter else 0
        amp = rng.lognormal(0.0, spec.amplitude_spread) if spec.amplitude_spread else 1.0
        return amp * _shift_rows(tpl, shift)

    x = np.zeros((spec.n_samples, spec.t_dim, spec.f_dim))
    y = np.zeros((spec.n_samples, spec.n_classes), dtype=np.int64)
    top = min(spec.max_labels, spec.n_classes)
    for i in range(spec.n_samples):
        k = int(rng.integers(1, top + 1))
        labels = rng.choice(spec.n_classes, size=k, replace=False)
        y[i, labels] = 1
        for c in sorted(labels):
            for tpl in templates[c]:
                if spec.presence_prob >= 1.0 or rng.random() < spec.presence_prob:
                    x[i] += draw(tpl)
        for tpl in background:
            x[i] += draw(tpl)
        if spec.bleed_channels:
            x[i] += rng.uniform(0.9, 1.1) * bleed
        if spec.noise_scale > 0:
            x[i] += spec.noise_scale * np.abs(rng.standard_normal((spec.t_dim, spec.f_dim)))

    natural = sparsity_ratio(x)
    if natural > spec.target_sparsity + 0.02:
        raise InvalidArgumentError(
            f"target sparsity {spec.target_sparsity} unattainable: signal alone is {natural:.4f} sparse"
        )
    if natural < spec.target_sparsity:
        n_zero = int(round(spec.target_sparsity * x.size))
        cut = np.partition(x.ravel(), n_zero - 1)[n_zero - 1]
        x[x <= cut] = 0.0

    names = [f"class_{c:02d}" for c in range(spec.n_classes)]
    samples = [SpectrumSample(x[i], y[i], f"s{i:04d}") for i in range(spec.n_samples)]
    return Dataset(samples, spec.t_dim, spec.f_dim, names)


def train_test_split(d: Dataset, test_fraction: float, seed: int):
    if len(d) < 2:
        raise InvalidArgumentError("need at least 2 samples to split")
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError(f"test_fraction must be in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(len(d))
    n_test = min(max(int(round(test_fraction * len(d))), 1), len(d) - 1)
    test_idx = sorted(perm[:n_test])
    train_idx = sorted(perm[n_test:])
    return d.subset(train_idx), d.subset(test_idx)


# -- file I/O -------------------------------------------------------------


def save_dataset(d: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in d.samples:
        fname = f"{s.sample_id}.bin"
        with open(path / fname, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, d.t_dim, d.f_dim))
            fh.write(np.ascontiguousarray(s.intensities, dtype="<f8").tobytes())
        entries.append({"id": s.sample_id, "file": fname, "labels": [int(v) for v in s.labels]})
    manifest = {
        "format_version": FORMAT_VERSION,
        "t_dim": d.t_dim,
        "f_dim": d.f_dim,
        "class_names": list(d.class_names),
        "samples": entries,
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _read_sample(file: Path, t_dim: int, f_dim: int) -> np.ndarray:
    if not file.is_file():
        raise DataError(f"sample file not found: {file}")
    raw = file.read_bytes()
    if len(raw) < _HEADER.size:
        raise SchemaError(f"{file}: truncated header")
    magic, version, t, f = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SchemaError(f"{file}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SchemaError(f"{file}: unsupported format version {version}")
    if (t, f) != (t_dim, f_dim):
        raise SchemaError(f"{file}: shape ({t}, {f}) != manifest ({t_dim}, {f_dim})")
    if len(raw) != _HEADER.size + 8 * t * f:
        raise SchemaError(f"{file}: expected {t * f} float64 values, got {(len(raw) - _HEADER.size) / 8}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(t, f).astype(np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise SchemaError(f"{file}: intensities must be finite and non-negative")
    return values


def load_dataset(path) -> Dataset:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise DataError(f"manifest not found: {mpath}")
    text = mpath.read_text(encoding="utf-8")
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{mpath}:{exc.lineno}: {exc.msg}") from exc
    try:
        t_dim, f_dim = int(manifest["t_dim"]), int(manifest["f_dim"])
        class_names = list(manifest["class_names"])
        entries = manifest["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{mpath}: malformed manifest ({exc})") from exc
    if manifest.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise SchemaError(f"{mpath}: unsupported format version {manifest.get('format_version')}")

    samples = []
    for entry in entries:
        try:
            sid, fname, labels = entry["id"], entry["file"], entry["labels"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{mpath}: malformed sample entry {entry!r}") from exc
        if len(labels) != len(class_names):
            raise SchemaError(f"{mpath}: sample {sid} has {len(labels)} labels for {len(class_names)} classes")
        values = _read_sample(path / fname, t_dim, f_dim)
        samples.append(SpectrumSample(values, np.asarray(labels), sid))
    return Dataset(samples, t_dim, f_dim, class_names)

