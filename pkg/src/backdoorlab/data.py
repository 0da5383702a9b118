"""Dataset ingestion, splitting, and backdoor poisoning transforms.

Two substrates: MNIST-format IDX files and a synthetic 16x16 digit task
(seven-segment style templates plus Gaussian pixel noise) that needs no
files and is separable by construction. Datasets are immutable after
construction; poisoning returns new datasets and only ever touches the
training split.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .rng import Rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Labeled image samples: images [S,1,H,W] in [0,1], one class index each.

    For triggered sets built by `backdoored_testset`, `labels` carry the
    attacker's target labels and `true_labels` retain the originals.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    role: str = "train"
    true_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise ValueError(f"images must be 4-D [S,C,H,W], got {images.ndim}-D")
        if len(images) != len(labels):
            raise ValueError(f"{len(images)} images but {len(labels)} labels")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.role not in ("train", "valid", "test"):
            raise ValueError(f"unknown dataset role {self.role!r}")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if len(images) and (images.min() < -0.0 or images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        true_labels = self.true_labels
        if true_labels is not None:
            true_labels = np.ascontiguousarray(true_labels, dtype=np.int64)
            if len(true_labels) != len(labels):
                raise ValueError("true_labels length does not match labels")
            true_labels.setflags(write=False)
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "true_labels", true_labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def take(self, indices: np.ndarray, role: Optional[str] = None) -> "Dataset":
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            role=role or self.role,
            true_labels=None if self.true_labels is None else self.true_labels[indices],
        )


@dataclass(frozen=True)
class ShiftLabelMap:
    """z -> (z+1) mod M; never maps a class to itself for M >= 2."""

    def map_array(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        if num_classes < 2:
            raise ValueError("shift map needs at least 2 classes")
        return (labels + 1) % num_classes

    def self_mapped_classes(self, num_classes: int) -> frozenset:
        return frozenset()

    def to_json(self) -> dict:
        return {"kind": "shift"}


@dataclass(frozen=True)
class FixedTargetMap:
    """Every poisoned sample is labeled as one attacker-chosen class.

    Samples already belonging to the target class are ineligible for
    poisoning (the mapped label must differ from the original).
    """

    target: int

    def map_array(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        if not 0 <= self.target < num_classes:
            raise ValueError(f"target {self.target} out of range [0, {num_classes})")
        return np.full_like(labels, self.target)

    def self_mapped_classes(self, num_classes: int) -> frozenset:
        return frozenset({self.target})

    def to_json(self) -> dict:
        return {"kind": "fixed", "target": self.target}


@dataclass(frozen=True)
class RandomWrongMap:
    """Seeded uniform draw over the wrong classes, per sample."""

    seed: int = 0

    def map_array(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        if num_classes < 2:
            raise ValueError("random wrong-label map needs at least 2 classes")
        rng = Rng(self.seed)
        out = np.empty_like(labels)
        for i, z in enumerate(labels):
            r = rng.below(num_classes - 1)
            out[i] = r if r < z else r + 1
        return out

    def self_mapped_classes(self, num_classes: int) -> frozenset:
        return frozenset()

    def to_json(self) -> dict:
        return {"kind": "random_wrong", "seed": self.seed}


LabelMap = Union[ShiftLabelMap, FixedTargetMap, RandomWrongMap]


def label_map_from_json(obj: dict) -> LabelMap:
    kind = obj.get("kind")
    if kind == "shift":
        return ShiftLabelMap()
    if kind == "fixed":
        return FixedTargetMap(target=int(obj["target"]))
    if kind == "random_wrong":
        return RandomWrongMap(seed=int(obj.get("seed", 0)))
    raise ValueError(f"unknown label map kind {kind!r}")


@dataclass(frozen=True)
class TriggerSpec:
    """A rectangular pixel patch plus the label mapping it should trigger."""

    row: int
    col: int
    height: int
    width: int
    value: float
    label_map: LabelMap

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("trigger patch must be at least 1x1")
        if self.row < 0 or self.col < 0:
            raise ValueError("trigger patch position must be non-negative")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"patch value {self.value} outside [0, 1]")

    @classmethod
    def bottom_right(cls, image_hw: tuple[int, int], height: int = 3, width: int = 3,
                     value: float = 1.0, label_map: LabelMap = ShiftLabelMap()) -> "TriggerSpec":
        h, w = image_hw
        return cls(row=h - height, col=w - width, height=height, width=width,
                   value=value, label_map=label_map)

    def check_fits(self, image_hw: tuple[int, int]) -> None:
        h, w = image_hw
        if self.row + self.height > h or self.col + self.width > w:
            raise ValueError(
                f"trigger patch {self.height}x{self.width} at ({self.row},{self.col}) "
                f"does not fit a {h}x{w} image"
            )

    def to_json(self) -> dict:
        return {
            "row": self.row, "col": self.col,
            "height": self.height, "width": self.width,
            "value": self.value, "label_map": self.label_map.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TriggerSpec":
        return cls(row=int(obj["row"]), col=int(obj["col"]), height=int(obj["height"]),
                   width=int(obj["width"]), value=float(obj["value"]),
                   label_map=label_map_from_json(obj["label_map"]))


def _read_header_words(f, count: int, path: str) -> list[int]:
    raw = f.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError(f"{path}: truncated IDX header")
    return list(struct.unpack(f">{count}I", raw))


def load_idx(images_path: str, labels_path: str, role: str = "train",
             num_classes: Optional[int] = None) -> Dataset:
    """Parse an MNIST-format IDX image/label file pair; pixels scaled by 1/255."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = _read_header_words(f, 4, str(images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(
                f"{images_path}: bad image magic 0x{magic:08X}, expected 0x{IDX_IMAGE_MAGIC:08X}"
            )
        raw = f.read()
    if len(raw) != count * rows * cols:
        raise ValueError(f"{images_path}: expected {count * rows * cols} pixel bytes, got {len(raw)}")
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = images.reshape(count, 1, rows, cols)

    with open(labels_path, "rb") as f:
        magic, label_count = _read_header_words(f, 2, str(labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(
                f"{labels_path}: bad label magic 0x{magic:08X}, expected 0x{IDX_LABEL_MAGIC:08X}"
            )
        raw = f.read()
    if len(raw) != label_count:
        raise ValueError(f"{labels_path}: expected {label_count} label bytes, got {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if label_count != count:
        raise ValueError(f"image count {count} does not match label count {label_count}")

    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(images=images, labels=labels, num_classes=num_classes, role=role)


# Seven-segment cells on a 16x16 grid; the bottom-right corner stays blank,
# which keeps the default trigger location template-free.
_SEGMENT_CELLS = {
    "A": (slice(2, 4), slice(4, 12)),
    "G": (slice(7, 9), slice(4, 12)),
    "D": (slice(12, 14), slice(4, 12)),
    "F": (slice(2, 9), slice(4, 6)),
    "B": (slice(2, 9), slice(10, 12)),
    "E": (slice(7, 14), slice(4, 6)),
    "C": (slice(7, 14), slice(10, 12)),
}
_DIGIT_SEGMENTS = {
    0: "ABCDEF", 1: "BC", 2: "ABGED", 3: "ABGCD", 4: "FGBC",
    5: "AFGCD", 6: "AFGECD", 7: "ABC", 8: "ABCDEFG", 9: "ABCDFG",
}
SYNTH_IMAGE_SIZE = 16


@lru_cache(maxsize=1)
def digit_templates() -> np.ndarray:
    """The ten 16x16 class templates, values in {0, 1}; read-only."""
    out = np.zeros((10, SYNTH_IMAGE_SIZE, SYNTH_IMAGE_SIZE))
    for digit, segments in _DIGIT_SEGMENTS.items():
        for seg in segments:
            rows, cols = _SEGMENT_CELLS[seg]
            out[digit, rows, cols] = 1.0
    out.setflags(write=False)
    return out


def synth_digits(classes: int, per_class: int, noise: float, seed: int,
                 role: str = "train") -> Dataset:
    """Deterministic synthetic digit set: class templates plus clamped Gaussian noise."""
    if not 1 <= classes <= 10:
        raise ValueError(f"classes must be in [1, 10], got {classes}")
    if per_class < 0:
        raise ValueError("per_class must be >= 0")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    templates = digit_templates()[:classes]
    total = classes * per_class
    images = np.repeat(templates[:, None, None, :, :], per_class, axis=1).reshape(
        total, 1, SYNTH_IMAGE_SIZE, SYNTH_IMAGE_SIZE).copy()
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    if noise > 0 and total:
        z = Rng(seed).normals(images.size).reshape(images.shape)
        images = np.clip(images + noise * z, 0.0, 1.0)
    return Dataset(images=images, labels=labels, num_classes=classes, role=role)


def split_validation(data: Dataset, fraction: float = 0.1, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Hold out a seeded validation split before any poisoning happens.

    Returns (train, valid); the valid split models the defender's clean
    data, which the attacker never sees.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_valid = int(round(fraction * len(data)))
    if n_valid < 1 or n_valid >= len(data):
        raise ValueError(f"fraction {fraction} leaves an empty split for {len(data)} samples")
    perm = Rng(seed).permutation(len(data))
    return data.take(perm[n_valid:], role="train"), data.take(perm[:n_valid], role="valid")


def apply_trigger(image: np.ndarray, trig: TriggerSpec) -> np.ndarray:
    """Stamp the trigger patch onto one [C,H,W] image; idempotent."""
    if image.ndim != 3:
        raise ValueError(f"image must be 3-D [C,H,W], got {image.ndim}-D")
    trig.check_fits(image.shape[1:])
    out = np.array(image, dtype=np.float64)
    out[:, trig.row:trig.row + trig.height, trig.col:trig.col + trig.width] = trig.value
    return out


def _trigger_batch(images: np.ndarray, trig: TriggerSpec) -> np.ndarray:
    trig.check_fits(images.shape[2:])
    out = np.array(images, dtype=np.float64)
    out[:, :, trig.row:trig.row + trig.height, trig.col:trig.col + trig.width] = trig.value
    return out


def poison(data: Dataset, trig: TriggerSpec, fraction: float, mode: str = "append",
           seed: int = 0) -> Dataset:
    """Plant ceil(fraction * S) triggered, re-labeled samples in a training set.

    `append` keeps the originals and adds poisoned copies; `replace`
    overwrites the selected samples in place. Only train-role datasets may
    be poisoned; samples whose mapped label would equal their own are
    ineligible for selection.
    """
    if data.role != "train":
        raise ValueError(f"refusing to poison a {data.role!r} dataset; only the training split may be poisoned")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if mode not in ("append", "replace"):
        raise ValueError(f"unknown poison mode {mode!r}")
    n_poison = int(np.ceil(fraction * len(data)))
    if n_poison == 0:
        return data

    trig.check_fits(data.image_shape[1:])
    mapped_all = trig.label_map.map_array(data.labels, data.num_classes)
    eligible = np.flatnonzero(mapped_all != data.labels)
    if n_poison > len(eligible):
        raise ValueError(
            f"cannot poison {n_poison} samples: only {len(eligible)} have a label "
            "the map can change"
        )
    rng = Rng(seed)
    chosen = eligible[np.sort(rng.sample(len(eligible), n_poison))]

    bad_images = _trigger_batch(data.images[chosen], trig)
    bad_labels = mapped_all[chosen]
    if mode == "append":
        images = np.concatenate([data.images, bad_images])
        labels = np.concatenate([data.labels, bad_labels])
    else:
        images = np.array(data.images)
        labels = np.array(data.labels)
        images[chosen] = bad_images
        labels[chosen] = bad_labels
    return Dataset(images=images, labels=labels, num_classes=data.num_classes, role=data.role)


def backdoored_testset(data: Dataset, trig: TriggerSpec) -> Dataset:
    """Trigger every sample; labels become the attack targets, originals kept alongside."""
    if len(data) == 0:
        return Dataset(images=data.images, labels=data.labels,
                       num_classes=data.num_classes, role=data.role,
                       true_labels=np.array(data.labels))
    images = _trigger_batch(data.images, trig)
    attack_labels = trig.label_map.map_array(data.labels, data.num_classes)
    return Dataset(images=images, labels=attack_labels, num_classes=data.num_classes,
                   role=data.role, true_labels=np.array(data.labels))
