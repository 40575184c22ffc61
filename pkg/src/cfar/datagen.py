"""Seeded synthetic longitudinal waveform datasets with drift and dropout,
plus load/save in a plain comma-separated text format.

Clusters are Gaussian blobs whose centroids satisfy a minimum pairwise
separation; each cluster drifts along a fixed random direction between
sessions, with per-session isotropic jitter standing in for orientation
changes. Feature vectors are laid out channel-major: index c*samples + t is
channel c, time t.

The generator consumes independent named RNG streams so tests can replay any
one of them in isolation:

  default_rng([seed, 0])  centroid placement
  default_rng([seed, 1])  drift directions
  default_rng([seed, 2])  dropout mask, shape (n_clusters, n_sessions);
                          a unit is emitted where random() >= dropout
  default_rng([seed, 3])  per-(cluster, session) jitter directions
  default_rng([seed, 4])  waveform noise, shape (n_clusters, n_sessions, D)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_CENTROID_RETRY_CAP = 10_000


class ConfigError(ValueError):
    """Invalid generator configuration; message names the offending field."""


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the 1-based line number."""


@dataclass(frozen=True)
class GeneratorConfig:
    n_clusters: int = 96
    n_sessions: int = 5
    dropout: float = 0.25
    channels: int = 32
    samples_per_channel: int = 38
    drift_step: float = 12.0
    noise_sd: float = 1.2
    cluster_separation: float = 22.0
    seed: int = 0

    @property
    def dim(self) -> int:
        return self.channels * self.samples_per_channel

    def validate(self) -> None:
        if self.n_clusters < 1:
            raise ConfigError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.n_sessions < 1:
            raise ConfigError(f"n_sessions must be >= 1, got {self.n_sessions}")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError(f"dropout must lie in [0, 1], got {self.dropout}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.samples_per_channel < 1:
            raise ConfigError(
                f"samples_per_channel must be >= 1, got {self.samples_per_channel}"
            )
        if self.drift_step < 0:
            raise ConfigError(f"drift_step must be >= 0, got {self.drift_step}")
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.cluster_separation <= 0:
            raise ConfigError(
                f"cluster_separation must be > 0, got {self.cluster_separation}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


class WaveformDataset:
    """Units-by-features matrix with session ids and optional truth labels.

    Row index equals unit id (ids are contiguous from 0). `channels` and
    `samples_per_channel` are generation-time metadata; they are not stored
    in the file format, so loaded datasets carry None until told otherwise.
    """

    def __init__(
        self,
        features: np.ndarray,
        sessions: np.ndarray,
        labels: np.ndarray | None,
        channels: int | None = None,
        samples_per_channel: int | None = None,
    ):
        self.features = np.asarray(features, dtype=np.float64)
        self.sessions = np.asarray(sessions, dtype=np.int64)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        self.channels = channels
        self.samples_per_channel = samples_per_channel
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.sessions) != self.n_units:
            raise ValueError("sessions length != number of units")
        if self.labels is not None and len(self.labels) != self.n_units:
            raise ValueError("labels length != number of units")

    @property
    def n_units(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def label_map(self) -> dict[int, int] | None:
        if self.labels is None:
            return None
        return {i: int(c) for i, c in enumerate(self.labels)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, WaveformDataset):
            return NotImplemented
        if (self.labels is None) != (other.labels is None):
            return False
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.sessions, other.sessions)
            and (self.labels is None or np.array_equal(self.labels, other.labels))
        )


def _place_centroids(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    d = cfg.dim
    min_dist = cfg.cluster_separation * cfg.noise_sd
    # Typical pairwise distance of two N(0, s^2 I_d) points is s*sqrt(2d);
    # aim 1.5x above the floor so rejection stays rare.
    scale = 1.5 * min_dist / np.sqrt(2.0 * d) if min_dist > 0 else 1.0
    centroids = np.empty((cfg.n_clusters, d))
    retries = 0
    k = 0
    while k < cfg.n_clusters:
        cand = rng.normal(0.0, scale, size=d)
        if k == 0 or min_dist == 0:
            ok = True
        else:
            dists = np.linalg.norm(centroids[:k] - cand, axis=1)
            ok = bool(np.all(dists >= min_dist))
        if ok:
            centroids[k] = cand
            k += 1
        else:
            retries += 1
            if retries > _CENTROID_RETRY_CAP:
                raise ConfigError(
                    "cluster_separation: could not place centroids within "
                    f"{_CENTROID_RETRY_CAP} retries"
                )
    if cfg.n_clusters > 1 and min_dist > 0:
        # paranoia: the guarantee callers rely on
        from scipy.spatial.distance import pdist

        assert pdist(centroids).min() >= min_dist
    return centroids


def generate_synthetic(cfg: GeneratorConfig) -> WaveformDataset:
    """Draw a dataset per config; deterministic given cfg.seed."""
    cfg.validate()
    d = cfg.dim
    centroids = _place_centroids(cfg, np.random.default_rng([cfg.seed, 0]))

    rng_drift = np.random.default_rng([cfg.seed, 1])
    directions = rng_drift.normal(size=(cfg.n_clusters, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    drift = directions * cfg.drift_step

    rng_drop = np.random.default_rng([cfg.seed, 2])
    emitted = rng_drop.random((cfg.n_clusters, cfg.n_sessions)) >= cfg.dropout

    rng_jit = np.random.default_rng([cfg.seed, 3])
    jitter = rng_jit.normal(size=(cfg.n_clusters, cfg.n_sessions, d))
    jitter /= np.linalg.norm(jitter, axis=2, keepdims=True)
    jitter *= 0.25 * cfg.drift_step

    rng_noise = np.random.default_rng([cfg.seed, 4])
    noise = rng_noise.normal(0.0, cfg.noise_sd, size=(cfg.n_clusters, cfg.n_sessions, d))

    feats, sessions, labels = [], [], []
    for s in range(cfg.n_sessions):
        for k in range(cfg.n_clusters):
            if not emitted[k, s]:
                continue
            feats.append(centroids[k] + s * drift[k] + jitter[k, s] + noise[k, s])
            sessions.append(s)
            labels.append(k)
    features = np.array(feats) if feats else np.empty((0, d))
    return WaveformDataset(
        features,
        np.array(sessions, dtype=np.int64),
        np.array(labels, dtype=np.int64),
        channels=cfg.channels,
        samples_per_channel=cfg.samples_per_channel,
    )


def save_dataset(dataset: WaveformDataset, path: str | Path) -> None:
    """Write the comma-separated text format (UTF-8, LF, round-trip floats)."""
    d = dataset.dim
    header = "unit_id,session,label," + ",".join(f"f{j}" for j in range(d))
    lines = [header]
    for i in range(dataset.n_units):
        label = -1 if dataset.labels is None else int(dataset.labels[i])
        row = [str(i), str(int(dataset.sessions[i])), str(label)]
        row.extend(repr(float(v)) for v in dataset.features[i])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_dataset(path: str | Path) -> WaveformDataset:
    """Parse the text format; rejects ragged rows, duplicate or gapped ids."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:2] != ["unit_id", "session"]:
        raise DatasetFormatError(
            f"{path}: line 1: header must start with unit_id,session"
        )
    has_label = len(header) > 2 and header[2] == "label"
    first_feat = 3 if has_label else 2
    n_cols = len(header)
    d = n_cols - first_feat

    rows: dict[int, tuple[int, int, list[float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DatasetFormatError(
                f"{path}: line {lineno}: expected {n_cols} fields, got {len(parts)}"
            )
        try:
            unit_id = int(parts[0])
            session = int(parts[1])
            label = int(parts[2]) if has_label else -1
            feats = [float(v) for v in parts[first_feat:]]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
        if unit_id in rows:
            raise DatasetFormatError(
                f"{path}: line {lineno}: duplicate unit_id {unit_id}"
            )
        rows[unit_id] = (session, label, feats)

    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise DatasetFormatError(
            f"{path}: unit_ids must be contiguous from 0, got {sorted(rows)[:5]}..."
        )
    sessions = np.array([rows[i][0] for i in range(n)], dtype=np.int64)
    label_vals = [rows[i][1] for i in range(n)]
    features = np.array([rows[i][2] for i in range(n)], dtype=np.float64)
    if features.size == 0:
        features = features.reshape(n, d)

    if all(v == -1 for v in label_vals):
        labels = None
    elif any(v == -1 for v in label_vals):
        raise DatasetFormatError(
            f"{path}: labels must be present for every unit or absent (-1) for all"
        )
    else:
        labels = np.array(label_vals, dtype=np.int64)
    return WaveformDataset(features, sessions, labels)
