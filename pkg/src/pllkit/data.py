"""Synthetic feature datasets with the SEED-V trial structure.

Per subject: 3 sessions x 15 trials (3 per emotion class) x N segments,
each segment a 310-dim feature vector in [0, 1]. Features come from
class-conditional Gaussians and are min-max normalized per subject.
The trial-based fold protocol splits trials 1-5 / 6-10 / 11-15 of every
session into folds 1 / 2 / 3.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

SESSIONS = 3
TRIALS_PER_SESSION = 15
NUM_CLASSES = 5


class DataError(ValueError):
    """Malformed dataset file or a violated structural invariant."""


def class_of_trial(trial: int) -> int:
    """Deterministic trial -> emotion map: trials 1,6,11 are class 0, and so on."""
    return (trial - 1) % NUM_CLASSES


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 1
    segments_per_trial: int = 30
    separation: float = 1.0   # scale of the class-mean draw
    noise: float = 0.1        # within-class feature standard deviation
    seed: int = 0
    feature_len: int = 310

    def __post_init__(self):
        if self.subjects < 1 or self.segments_per_trial < 1 or self.feature_len < 5:
            raise DataError("subjects, segments_per_trial and feature_len must be positive")
        if self.separation < 0 or self.noise < 0:
            raise DataError("separation and noise must be non-negative")


@dataclass
class Dataset:
    """Ordered samples with identity columns; read-only after construction."""

    features: np.ndarray   # (N, s) float64
    labels: np.ndarray     # (N,) int
    subjects: np.ndarray   # (N,) int
    sessions: np.ndarray   # (N,) int, 1..3
    trials: np.ndarray     # (N,) int, 1..15
    segments: np.ndarray   # (N,) int

    def __post_init__(self):
        n = self.features.shape[0]
        for name in ("labels", "subjects", "sessions", "trials", "segments"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"column {name} does not match the sample count")
        if not np.all(np.isfinite(self.features)):
            raise DataError("dataset contains non-finite features")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= NUM_CLASSES:
            raise DataError("labels must lie in [0, 5)")
        if ((self.sessions < 1) | (self.sessions > SESSIONS)).any():
            raise DataError("sessions must lie in 1..3")
        if ((self.trials < 1) | (self.trials > TRIALS_PER_SESSION)).any():
            raise DataError("trials must lie in 1..15")
        # a trial is a single stimulus: all its segments carry one class
        key = (self.subjects.astype(np.int64) * 1000 + self.sessions) * 100 + self.trials
        for trial_key in np.unique(key):
            classes = np.unique(self.labels[key == trial_key])
            if classes.size > 1:
                raise DataError(f"trial group {trial_key} mixes classes {classes.tolist()}")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_len(self) -> int:
        return self.features.shape[1]

    def subject_ids(self):
        return sorted(set(self.subjects.tolist()))

    def subject_indices(self, subject: int) -> np.ndarray:
        idx = np.flatnonzero(self.subjects == subject)
        if idx.size == 0:
            raise DataError(f"no samples for subject {subject}")
        return idx


def _minmax_per_subject(features: np.ndarray, subjects: np.ndarray) -> np.ndarray:
    out = features.copy()
    for subject in np.unique(subjects):
        idx = subjects == subject
        block = out[idx]
        lo = block.min(axis=0)
        span = block.max(axis=0) - lo
        scaled = np.where(span > 0, (block - lo) / np.where(span > 0, span, 1.0), 0.0)
        out[idx] = scaled
    return out


def synth_generate(config: SynthConfig, rng=None) -> Dataset:
    """Class-conditional Gaussian features on the SEED-V trial grid.

    Class means are drawn once per (subject, class) on the unit cube and
    scaled by `separation`; bit-for-bit reproducible from (config, seed).
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    feats, labels, subs, sess, trials, segs = [], [], [], [], [], []
    for subject in range(config.subjects):
        means = config.separation * rng.uniform(0.0, 1.0, size=(NUM_CLASSES, config.feature_len))
        for session in range(1, SESSIONS + 1):
            for trial in range(1, TRIALS_PER_SESSION + 1):
                cls = class_of_trial(trial)
                noise = rng.normal(0.0, config.noise,
                                   size=(config.segments_per_trial, config.feature_len))
                for seg in range(config.segments_per_trial):
                    feats.append(means[cls] + noise[seg])
                    labels.append(cls)
                    subs.append(subject)
                    sess.append(session)
                    trials.append(trial)
                    segs.append(seg)
    features = np.asarray(feats)
    subjects = np.asarray(subs)
    features = _minmax_per_subject(features, subjects)
    return Dataset(features=features, labels=np.asarray(labels), subjects=subjects,
                   sessions=np.asarray(sess), trials=np.asarray(trials),
                   segments=np.asarray(segs))


# ---------------------------------------------------------------------------
# CSV format: header `subject,session,trial,segment,label,f000..f309`


def _feature_names(s: int):
    width = max(3, len(str(s - 1)))
    return [f"f{i:0{width}d}" for i in range(s)]


def write_dataset(path, dataset: Dataset) -> None:
    names = _feature_names(dataset.feature_len)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("subject,session,trial,segment,label," + ",".join(names) + "\n")
        for i in range(dataset.num_samples):
            row = [str(dataset.subjects[i]), str(dataset.sessions[i]), str(dataset.trials[i]),
                   str(dataset.segments[i]), str(dataset.labels[i])]
            row.extend(repr(float(v)) for v in dataset.features[i])
            fh.write(",".join(row) + "\n")


def write_config_echo(path, config: SynthConfig) -> None:
    """Flat key=value echo of the generation settings, rng seed included."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in asdict(config).items():
            fh.write(f"{key}={value}\n")


def load_dataset(path) -> Dataset:
    """Parse and validate the documented CSV; normalizes only if out of [0, 1]."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:5] != ["subject", "session", "trial", "segment", "label"]:
            raise DataError(f"unexpected dataset header in {path}")
        s = len(header) - 5
        if s < 5:
            raise DataError(f"{path}: expected at least 5 feature columns, got {s}")
        feats, labels, subs, sess, trials, segs = [], [], [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != s + 5:
                raise DataError(f"{path}:{lineno}: expected {s + 5} fields, got {len(parts)}")
            try:
                subject, session, trial, segment, label = (int(v) for v in parts[:5])
                vec = np.array(parts[5:], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not 0 <= label < NUM_CLASSES:
                raise DataError(f"{path}:{lineno}: label {label} outside [0, {NUM_CLASSES})")
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite feature value")
            subs.append(subject)
            sess.append(session)
            trials.append(trial)
            segs.append(segment)
            labels.append(label)
            feats.append(vec)
    features = np.asarray(feats)
    subjects = np.asarray(subs)
    if features.min() < 0.0 or features.max() > 1.0:
        features = _minmax_per_subject(features, subjects)
    return Dataset(features=features, labels=np.asarray(labels), subjects=subjects,
                   sessions=np.asarray(sess), trials=np.asarray(trials),
                   segments=np.asarray(segs))


# ---------------------------------------------------------------------------
# normalization and folds


def minmax_stats(train_features: np.ndarray):
    """Per-feature (min, span) computed on training folds only."""
    lo = train_features.min(axis=0)
    span = train_features.max(axis=0) - lo
    return lo, span


def apply_minmax(features: np.ndarray, stats) -> np.ndarray:
    """Scale with training-fold stats; constant features map to 0, output clipped to [0, 1]."""
    lo, span = stats
    scaled = np.where(span > 0, (features - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(scaled, 0.0, 1.0)


def fold_of_trial(trial: int) -> int:
    if trial <= 5:
        return 1
    if trial <= 10:
        return 2
    return 3


def assign_folds(dataset: Dataset) -> np.ndarray:
    """Fold id per sample; every (subject, session) must hold exactly trials 1..15."""
    for subject in dataset.subject_ids():
        for session in range(1, SESSIONS + 1):
            idx = (dataset.subjects == subject) & (dataset.sessions == session)
            present = set(dataset.trials[idx].tolist())
            if present != set(range(1, TRIALS_PER_SESSION + 1)):
                raise DataError(
                    f"subject {subject} session {session} has trials {sorted(present)}, expected 1..15")
    return np.array([fold_of_trial(t) for t in dataset.trials])
