"""Candidate-label generation.

Two generators: classical independent inclusion with ambiguity q, and
similarity-driven inclusion where the per-class probability comes from
chord distances between emotions placed on a valence/arousal wheel.
Candidate sets always contain the ground truth; their uniform
distribution puts 1/|Y| on each candidate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("happy", "neutral", "sad", "fear", "disgust")


class LabelError(ValueError):
    """Invalid generator inputs or a malformed candidate file."""


@dataclass(frozen=True)
class EmotionWheel:
    """Per-class polar coordinates (radius in [0, 1], angle in degrees)."""

    names: tuple
    radii: tuple
    angles_deg: tuple

    def __post_init__(self):
        n = len(self.names)
        if n < 2 or len(self.radii) != n or len(self.angles_deg) != n:
            raise LabelError("wheel needs matching names/radii/angles for at least 2 emotions")
        for name, r in zip(self.names, self.radii):
            if not 0.0 <= r <= 1.0:
                raise LabelError(f"radius for {name!r} must lie in [0, 1], got {r}")
            if name == "neutral" and r != 0.0:
                raise LabelError("neutral must sit at the wheel center (radius 0)")

    @classmethod
    def default(cls) -> "EmotionWheel":
        # quarter emotions at 18-degree spacing; disgust between upset and
        # nervous, fear between stressed and tense; neutral at the center
        return cls(
            names=CLASS_NAMES,
            radii=(1.0, 0.0, 1.0, 1.0, 1.0),
            angles_deg=(27.0, 0.0, 207.0, 117.0, 153.0),
        )

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def tag(self) -> str:
        """Short stable hash of the wheel layout, used in provenance strings."""
        canon = json.dumps(
            [[n, repr(float(r)), repr(float(a))]
             for n, r, a in zip(self.names, self.radii, self.angles_deg)])
        return hashlib.sha1(canon.encode()).hexdigest()[:8]

    def to_json(self, path) -> None:
        payload = {n: [r, a] for n, r, a in zip(self.names, self.radii, self.angles_deg)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "EmotionWheel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        names = tuple(payload)
        return cls(names=names,
                   radii=tuple(float(payload[n][0]) for n in names),
                   angles_deg=tuple(float(payload[n][1]) for n in names))


def emotion_distance(i: int, j: int, wheel: EmotionWheel) -> float:
    """Chord distance via the law of cosines on the polar layout."""
    ri, rj = wheel.radii[i], wheel.radii[j]
    dtheta = math.radians(wheel.angles_deg[i] - wheel.angles_deg[j])
    sq = ri * ri + rj * rj - 2.0 * ri * rj * math.cos(dtheta)
    return math.sqrt(max(sq, 0.0))


def build_similarity(wheel: EmotionWheel) -> np.ndarray:
    """similarity(i, j) = 1 - dist(i, j) / max dist; diagonal 1, farthest pair 0."""
    k = wheel.num_classes
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            dist[i, j] = emotion_distance(i, j, wheel)
    dmax = dist.max()
    if dmax == 0.0:
        raise LabelError("all emotions coincide; similarity is undefined")
    return 1.0 - dist / dmax


@dataclass
class CandidateLabelSet:
    """Binary candidate mask with the concealed ground truth and provenance."""

    mask: np.ndarray          # (k,) of 0/1
    truth: int                # evaluation only, never shown to training losses
    provenance: str

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.mask.ndim != 1 or not np.isin(self.mask, (0, 1)).all():
            raise LabelError("mask must be a flat 0/1 vector")
        if not 0 <= self.truth < self.mask.size:
            raise LabelError(f"truth index {self.truth} outside [0, {self.mask.size})")
        if self.mask[self.truth] != 1:
            raise LabelError("ground truth must be a candidate")

    @property
    def uniform(self) -> np.ndarray:
        return uniformize(self.mask)


def uniformize(mask) -> np.ndarray:
    """1/|Y| on candidates, 0 elsewhere."""
    mask = np.asarray(mask)
    count = int(mask.sum())
    if count < 1:
        raise LabelError("cannot uniformize an empty candidate set")
    return mask.astype(np.float64) / count


def uniformize_batch(masks: np.ndarray) -> np.ndarray:
    counts = masks.sum(axis=1, keepdims=True)
    if (counts < 1).any():
        raise LabelError("cannot uniformize an empty candidate set")
    return masks.astype(np.float64) / counts


def gen_uniform_candidates(y: int, q: float, k: int, rng) -> CandidateLabelSet:
    """Each class other than y enters independently with probability q."""
    if not 0.0 <= q < 1.0:
        raise LabelError(f"ambiguity q must lie in [0, 1), got {q}")
    if not 0 <= y < k:
        raise LabelError(f"class index {y} outside [0, {k})")
    mask = (rng.random(k) < q).astype(np.int8)
    mask[y] = 1
    return CandidateLabelSet(mask, y, f"uniform:q={q:g}")


def gen_similarity_candidates(y: int, similarity: np.ndarray, rng,
                              provenance: str = "similarity") -> CandidateLabelSet:
    """Each class s enters independently with probability similarity[s, y]."""
    k = similarity.shape[0]
    if not 0 <= y < k:
        raise LabelError(f"class index {y} outside [0, {k})")
    mask = (rng.random(k) < similarity[:, y]).astype(np.int8)
    mask[y] = 1
    return CandidateLabelSet(mask, y, provenance)


def gen_uniform_masks(ys: np.ndarray, q: float, k: int, rng) -> np.ndarray:
    """Vectorized uniform-q generation; one row per ground truth in ys."""
    if not 0.0 <= q < 1.0:
        raise LabelError(f"ambiguity q must lie in [0, 1), got {q}")
    ys = np.asarray(ys)
    masks = (rng.random((ys.size, k)) < q).astype(np.int8)
    masks[np.arange(ys.size), ys] = 1
    return masks


def gen_similarity_masks(ys: np.ndarray, similarity: np.ndarray, rng) -> np.ndarray:
    ys = np.asarray(ys)
    probs = similarity[:, ys].T  # (n, k)
    masks = (rng.random(probs.shape) < probs).astype(np.int8)
    masks[np.arange(ys.size), ys] = 1
    return masks


def generate_for_labels(ys: np.ndarray, mode: str, *, q: float | None = None,
                        wheel: EmotionWheel | None = None, k: int = 5,
                        seed: int = 0) -> list:
    """Candidate sets for every ground truth in ys, one rng stream for the lot."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ys = np.asarray(ys)
    if mode == "uniform":
        if q is None:
            raise LabelError("uniform mode needs q")
        masks = gen_uniform_masks(ys, q, k, rng)
        prov = f"uniform:q={q:g}"
    elif mode == "similarity":
        wheel = wheel or EmotionWheel.default()
        if wheel.num_classes != k:
            raise LabelError(f"wheel has {wheel.num_classes} emotions, expected {k}")
        masks = gen_similarity_masks(ys, build_similarity(wheel), rng)
        prov = f"similarity:wheel={wheel.tag}"
    else:
        raise LabelError(f"unknown generation mode {mode!r}")
    return [CandidateLabelSet(masks[i], int(ys[i]), prov) for i in range(ys.size)]


# ---------------------------------------------------------------------------
# candidate-label files: one row per sample
# header: sample,truth,c0,...,c{k-1},provenance


def save_candidate_file(path, sets) -> None:
    if not sets:
        raise LabelError("refusing to write an empty candidate file")
    k = sets[0].mask.size
    header = "sample,truth," + ",".join(f"c{i}" for i in range(k)) + ",provenance"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for idx, cand in enumerate(sets):
            digits = ",".join(str(int(v)) for v in cand.mask)
            fh.write(f"{idx},{cand.truth},{digits},{cand.provenance}\n")


def load_candidate_file(path) -> list:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if len(header) < 4 or header[0] != "sample" or header[1] != "truth":
            raise LabelError(f"unexpected candidate file header in {path}")
        k = len(header) - 3
        sets = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != k + 3:
                raise LabelError(f"{path}:{lineno}: expected {k + 3} fields, got {len(parts)}")
            sample = int(parts[0])
            if sample != len(sets):
                raise LabelError(f"{path}:{lineno}: sample ids must be consecutive from 0")
            mask = np.array([int(v) for v in parts[2:2 + k]], dtype=np.int8)
            sets.append(CandidateLabelSet(mask, int(parts[1]), parts[2 + k]))
    return sets


def masks_matrix(sets) -> np.ndarray:
    return np.stack([c.mask for c in sets]).astype(np.int8)
