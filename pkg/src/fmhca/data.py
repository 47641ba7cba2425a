"""Opinion-pair datasets: binary interchange format, synthetic generation,
splitting, and padded batching.

The FOPD container stores, per company, two float32 embedding matrices
(timely and trending opinions) plus a sentiment label in {-1, 0, +1}.
Synthetic generators plant a known signal so achievable accuracy is known
by construction: ``separable`` puts a class mean in both modalities;
``interaction`` hides the label in the inner product between the two
modality means so that neither stream alone is predictive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    BadMagic,
    EmptyDataset,
    NonFiniteValue,
    TruncatedFile,
    UnsupportedVersion,
)
from .rng import Rng

FOPD_MAGIC = b"FOPD"
FOPD_VERSION = 1

VALID_LABELS = (-1, 0, 1)

# Interaction task geometry.  A fixed orthonormal frame provides topic
# directions t_1..t_P plus one shared polarity direction u.  The timely side
# names one topic (all rows near t_tau, no polarity content); the trending
# side carries equally many rows per topic at t_p + pol_p * u, with the
# named topic's polarity equal to the label and distractor polarities
# summing to -label.  Equal counts plus the shared u make the polarity
# component of mean(H) exactly zero, so no pooled-mean statistic of either
# modality carries the label: it lives solely in the within-row binding of
# topic and polarity, which takes cross-modal row matching to read.
INTERACTION_TOPICS = 4
INTERACTION_THRESHOLD = 0.5  # polarity values are -1/0/+1; buckets split at +-1/2
SIGNAL_SCALE = 12.0


@dataclass
class OpinionPairSample:
    """One company: timely matrix F (m x d), trending matrix H (n x d), label."""

    company_id: str
    label: int
    F: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.F = np.asarray(self.F)
        self.H = np.asarray(self.H)
        if self.label not in VALID_LABELS:
            raise ValueError(f"label must be -1, 0, or +1, got {self.label}")
        if self.F.ndim != 2 or self.H.ndim != 2:
            raise ValueError("opinion matrices must be 2-D")
        if self.F.shape[0] < 1 or self.H.shape[0] < 1:
            raise ValueError("each modality needs at least one opinion row")
        if self.F.shape[1] != self.H.shape[1]:
            raise ValueError(f"modality widths differ: {self.F.shape[1]} vs {self.H.shape[1]}")
        if not (np.isfinite(self.F).all() and np.isfinite(self.H).all()):
            raise NonFiniteValue(f"sample {self.company_id!r} contains NaN/Inf")

    @property
    def d_emb(self) -> int:
        return self.F.shape[1]


@dataclass
class Batch:
    """Samples padded to the batch maxima, with key-validity masks."""

    f_pad: np.ndarray  # (B, M_max, d) float32
    h_pad: np.ndarray  # (B, N_max, d) float32
    f_mask: np.ndarray  # (B, M_max) bool
    h_mask: np.ndarray  # (B, N_max) bool
    labels: np.ndarray  # (B,) int64
    company_ids: list[str] = field(default_factory=list)

    @property
    def d_emb(self) -> int:
        return self.f_pad.shape[2]

    def __len__(self) -> int:
        return self.f_pad.shape[0]


def write_dataset(samples: list[OpinionPairSample], path) -> None:
    """Write samples in the FOPD binary layout (little-endian, float32)."""
    if not samples:
        raise EmptyDataset("refusing to write a dataset with zero samples")
    d_emb = samples[0].d_emb
    if any(s.d_emb != d_emb for s in samples):
        raise ValueError("all samples must share one embedding width")
    with open(path, "wb") as f:
        f.write(FOPD_MAGIC)
        f.write(struct.pack("<I", FOPD_VERSION))
        f.write(struct.pack("<I", d_emb))
        f.write(struct.pack("<Q", len(samples)))
        for s in samples:
            cid = s.company_id.encode("utf-8")
            f.write(struct.pack("<I", len(cid)))
            f.write(cid)
            f.write(struct.pack("<b", s.label))
            f.write(struct.pack("<I", s.F.shape[0]))
            f.write(struct.pack("<I", s.H.shape[0]))
            f.write(np.ascontiguousarray(s.F, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(s.H, dtype="<f4").tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"needed {n} bytes, got {len(buf)}")
    return buf


def read_dataset(path) -> list[OpinionPairSample]:
    """Read an FOPD file back into validated samples."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if magic != FOPD_MAGIC:
            raise BadMagic(f"expected {FOPD_MAGIC!r}, got {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != FOPD_VERSION:
            raise UnsupportedVersion(f"FOPD version {version} not supported")
        (d_emb,) = struct.unpack("<I", _read_exact(f, 4))
        (count,) = struct.unpack("<Q", _read_exact(f, 8))
        samples = []
        for _ in range(count):
            (id_len,) = struct.unpack("<I", _read_exact(f, 4))
            cid = _read_exact(f, id_len).decode("utf-8")
            (label,) = struct.unpack("<b", _read_exact(f, 1))
            m, n = struct.unpack("<II", _read_exact(f, 8))
            fmat = np.frombuffer(_read_exact(f, 4 * m * d_emb), dtype="<f4").reshape(m, d_emb)
            hmat = np.frombuffer(_read_exact(f, 4 * n * d_emb), dtype="<f4").reshape(n, d_emb)
            if not (np.isfinite(fmat).all() and np.isfinite(hmat).all()):
                raise NonFiniteValue(f"sample {cid!r} contains NaN/Inf")
            samples.append(OpinionPairSample(cid, int(label), fmat.copy(), hmat.copy()))
        if f.read(1) != b"":
            raise TruncatedFile("unexpected trailing bytes after the last sample")
    return samples


@dataclass
class SyntheticSpec:
    """Recipe for a planted-signal dataset."""

    n_companies: int
    d_emb: int = 32
    m_range: tuple[int, int] = (4, 24)
    n_range: tuple[int, int] = (4, 24)
    priors: tuple[float, float, float] = (0.32, 0.41, 0.27)  # negative, neutral, positive
    task: str = "separable"
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_companies < 1:
            raise ValueError("n_companies must be >= 1")
        if self.d_emb < 2:
            raise ValueError("d_emb must be >= 2")
        for lo, hi in (self.m_range, self.n_range):
            if lo < 1 or hi < lo:
                raise ValueError(f"opinion-count range [{lo}, {hi}] is empty or invalid")
        if len(self.priors) != 3 or any(p < 0 for p in self.priors):
            raise ValueError("priors must be three nonnegative numbers")
        if abs(sum(self.priors) - 1.0) > 1e-9:
            raise ValueError(f"priors must sum to 1, got {sum(self.priors)}")
        if self.task not in ("separable", "interaction"):
            raise ValueError(f"task must be 'separable' or 'interaction', got {self.task!r}")
        if self.task == "interaction" and self.d_emb < INTERACTION_TOPICS + 1:
            raise ValueError(f"interaction task needs d_emb >= {INTERACTION_TOPICS + 1}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _unit_vector(rng: Rng, d: int) -> np.ndarray:
    v = rng.normal(d)
    return v / np.linalg.norm(v)


def _interaction_frame(rng: Rng, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal topic directions plus the shared polarity direction."""
    p = INTERACTION_TOPICS
    basis, _ = np.linalg.qr(rng.normal((d, p + 1)))
    return basis[:, :p].T, basis[:, p]


_POLARITY_VALUES = (-1.0, 0.0, 1.0)


@lru_cache(maxsize=None)
def _distractor_table(n_topics: int) -> dict[int, tuple[tuple[float, ...], ...]]:
    """All polarity tuples over the non-named topics, grouped by their sum."""
    table: dict[int, list[tuple[float, ...]]] = {}
    for index in range(3 ** (n_topics - 1)):
        combo, rest = [], index
        for _ in range(n_topics - 1):
            combo.append(_POLARITY_VALUES[rest % 3])
            rest //= 3
        table.setdefault(int(sum(combo)), []).append(tuple(combo))
    return {k: tuple(v) for k, v in table.items()}


def _dataset_directions(spec: "SyntheticSpec") -> tuple[dict, np.ndarray | None, np.ndarray | None]:
    """Class means plus the interaction frame, in generation draw order."""
    rng = Rng(spec.seed)
    class_means = {c: _unit_vector(rng, spec.d_emb) for c in VALID_LABELS}
    if spec.d_emb < INTERACTION_TOPICS + 1:  # separable-only spec, no room for a frame
        return class_means, None, None
    topics, polarity = _interaction_frame(rng, spec.d_emb)
    return class_means, topics, polarity


def interaction_score(F: np.ndarray, H: np.ndarray, spec: "SyntheticSpec") -> float:
    """Row-matching statistic: polarity of the trending rows whose topic
    matches the timely side's named topic."""
    _, topics, polarity = _dataset_directions(spec)
    tau = int(np.argmax(topics @ F.mean(axis=0)))
    assigned = np.argmax(H @ topics.T, axis=1) == tau
    if not assigned.any():
        return 0.0
    return float((H[assigned] @ polarity).mean() / SIGNAL_SCALE)


def interaction_rule(F: np.ndarray, H: np.ndarray, spec: "SyntheticSpec") -> int:
    """The planted labelling rule of the interaction task."""
    g = interaction_score(F, H, spec)
    if g > INTERACTION_THRESHOLD:
        return 1
    if g < -INTERACTION_THRESHOLD:
        return -1
    return 0


def generate_synthetic(spec: SyntheticSpec) -> list[OpinionPairSample]:
    """Seeded synthetic opinion pairs with a planted signal.

    separable: each class has a fixed unit mean direction added to every
    row of both modalities.  interaction: the timely side names one topic
    (all rows near its topic direction, no polarity content); the trending
    side carries equally many rows per topic, each row binding its topic
    direction to that topic's polarity along the shared polarity direction.
    The label is the named topic's polarity.  Equal counts and distractor
    polarities summing to the negated label cancel the polarity component
    of mean(H) exactly, so no pooled-mean statistic of either modality is
    predictive; the label lives in the within-row topic-polarity binding.
    """
    rng = Rng(spec.seed)
    class_means, topic_dirs, polarity_dir = _dataset_directions(spec)
    cum = np.cumsum(spec.priors)
    n_topics = INTERACTION_TOPICS
    samples = []
    for i in range(spec.n_companies):
        u = rng.uniform()
        label = VALID_LABELS[int(np.searchsorted(cum, u, side="right").clip(0, 2))]
        m = rng.randint(*spec.m_range)
        n = rng.randint(*spec.n_range)
        if spec.task == "separable":
            f_rows = class_means[label] + spec.noise_sigma * rng.normal((m, spec.d_emb))
            h_rows = class_means[label] + spec.noise_sigma * rng.normal((n, spec.d_emb))
        else:
            tau = rng.randint(0, n_topics - 1)
            options = _distractor_table(n_topics)[-label]
            distractors = options[rng.randint(0, len(options) - 1)]
            polarity = list(distractors[:tau]) + [float(label)] + list(distractors[tau:])
            f_rows = SIGNAL_SCALE * topic_dirs[tau] + spec.noise_sigma * rng.normal((m, spec.d_emb))
            n = max((n // n_topics) * n_topics, n_topics)  # equal rows per topic
            topics = [p % n_topics for p in range(n)]
            topics = [topics[j] for j in rng.permutation(n)]
            h_centers = np.stack([
                SIGNAL_SCALE * (topic_dirs[p] + polarity[p] * polarity_dir) for p in topics
            ])
            h_rows = h_centers + spec.noise_sigma * rng.normal((n, spec.d_emb))
        samples.append(OpinionPairSample(
            company_id=f"company-{i:05d}",
            label=label,
            F=f_rows.astype(np.float32),
            H=h_rows.astype(np.float32),
        ))
    return samples


def split(
    samples: list[OpinionPairSample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[OpinionPairSample], list[OpinionPairSample], list[OpinionPairSample]]:
    """Deterministic shuffle, then partition into train/val/test."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    order = Rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n = len(samples)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def make_batches(
    samples: list[OpinionPairSample],
    batch_size: int,
    shuffle_seed: int | None = None,
) -> list[Batch]:
    """Chunk samples and pad each chunk to its own maxima.

    Masks mark exactly the first m (resp. n) positions of each sample as
    valid; padded regions are zero-filled and never read back.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if samples and any(s.d_emb != samples[0].d_emb for s in samples):
        raise ValueError("all samples must share one embedding width")
    if shuffle_seed is not None:
        order = Rng(shuffle_seed).permutation(len(samples))
        samples = [samples[i] for i in order]
    batches = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        b = len(chunk)
        d = chunk[0].d_emb
        m_max = max(s.F.shape[0] for s in chunk)
        n_max = max(s.H.shape[0] for s in chunk)
        f_pad = np.zeros((b, m_max, d), dtype=np.float32)
        h_pad = np.zeros((b, n_max, d), dtype=np.float32)
        f_mask = np.zeros((b, m_max), dtype=bool)
        h_mask = np.zeros((b, n_max), dtype=bool)
        labels = np.zeros(b, dtype=np.int64)
        ids = []
        for i, s in enumerate(chunk):
            f_pad[i, : s.F.shape[0]] = s.F
            h_pad[i, : s.H.shape[0]] = s.H
            f_mask[i, : s.F.shape[0]] = True
            h_mask[i, : s.H.shape[0]] = True
            labels[i] = s.label
            ids.append(s.company_id)
        batches.append(Batch(f_pad, h_pad, f_mask, h_mask, labels, ids))
    return batches
