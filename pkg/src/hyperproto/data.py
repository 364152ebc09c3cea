"""Datasets: IDX ingestion, synthetic generators, congealed replacement."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .congeal import CongealSpec, congeal_set

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MANIFEST_VERSION = 1

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


class IdxError(ValueError):
    """Malformed IDX file."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


@dataclass
class Dataset:
    """Flat feature vectors with optional labels and a congealed flag.

    Instance ids are row positions ``0..n-1``; ``origin`` records the ids the
    rows had in the dataset this one was cut from.
    """

    x: np.ndarray
    labels: np.ndarray | None = None
    congealed: np.ndarray | None = None
    shape: tuple = ()
    source: str = ""
    origin: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("dataset vectors must form a 2-D array")
        n = len(self.x)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.intp)
            if self.labels.shape != (n,):
                raise ValueError("one label per item required")
        self.congealed = np.zeros(n, dtype=bool) if self.congealed is None else np.asarray(self.congealed, dtype=bool)
        self.origin = np.arange(n) if self.origin is None else np.asarray(self.origin, dtype=np.intp)
        if not self.shape:
            self.shape = (self.x.shape[1],)
        self.shape = tuple(int(s) for s in self.shape)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.x))

    def images(self) -> np.ndarray:
        if len(self.shape) != 2:
            raise ValueError("dataset does not hold 2-D images")
        return self.x.reshape((len(self.x),) + self.shape)

    def subset(self, ids) -> "Dataset":
        ids = np.asarray(ids, dtype=np.intp)
        return Dataset(
            x=self.x[ids],
            labels=None if self.labels is None else self.labels[ids],
            congealed=self.congealed[ids],
            shape=self.shape,
            source=self.source,
            origin=self.origin[ids],
        )

    def of_class(self, label: int) -> "Dataset":
        if self.labels is None:
            raise ValueError("dataset has no labels")
        return self.subset(np.flatnonzero(self.labels == label))

    def manifest(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "source": self.source,
            "n": len(self),
            "shape": list(self.shape),
            "congealed_ids": np.flatnonzero(self.congealed).tolist(),
        }


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def parse_idx(raw: bytes, expect_magic: int | None = None) -> np.ndarray:
    """Decode an IDX byte string into an array of its declared type and shape."""
    if len(raw) < 4:
        raise IdxTruncatedError("file shorter than the IDX magic number")
    magic = struct.unpack(">I", raw[:4])[0]
    if expect_magic is not None and magic != expect_magic:
        raise IdxMagicError(f"magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    zeros, code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zeros != 0 or code not in _IDX_TYPES or ndim == 0:
        raise IdxMagicError(f"not an IDX magic number: 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError("header shorter than its declared dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = len(raw) - header
    if payload < expected:
        raise IdxTruncatedError(f"payload has {payload} bytes, header promises {expected}")
    if payload > expected:
        raise IdxError(f"{payload - expected} trailing bytes after the payload")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    for code, dtype in _IDX_TYPES.items():
        if (array.dtype.kind, array.dtype.itemsize) == (dtype.kind, dtype.itemsize):
            break
    else:
        raise ValueError(f"dtype {array.dtype} has no IDX encoding")
    head = struct.pack(">I", (code << 8) | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return head + np.ascontiguousarray(array, dtype=dtype).tobytes()


def read_idx(images_path, labels_path=None) -> Dataset:
    """Read an IDX image file (and optional label file) scaled to [0, 1]."""
    with _open(images_path) as f:
        pixels = parse_idx(f.read(), IMAGE_MAGIC)
    labels = None
    if labels_path is not None:
        with _open(labels_path) as f:
            labels = parse_idx(f.read(), LABEL_MAGIC)
        if len(labels) != len(pixels):
            raise IdxCountMismatchError(f"{len(pixels)} images but {len(labels)} labels")
    n, rows, cols = pixels.shape
    return Dataset(
        x=pixels.reshape(n, rows * cols) / 255.0,
        labels=None if labels is None else labels.astype(np.intp),
        shape=(rows, cols),
        source=str(images_path),
    )


def write_idx(dataset: Dataset, images_path, labels_path=None) -> None:
    """Write pixels (rescaled to bytes) and labels in IDX format."""
    pixels = np.rint(np.clip(dataset.x, 0.0, 1.0) * 255.0).astype(np.uint8)
    shape = dataset.shape if len(dataset.shape) == 2 else (1, dataset.shape[0])
    Path(images_path).write_bytes(encode_idx(pixels.reshape((len(dataset),) + shape)))
    if labels_path is not None:
        if dataset.labels is None:
            raise ValueError("dataset has no labels to write")
        Path(labels_path).write_bytes(encode_idx(dataset.labels.astype(np.uint8)))


def save_manifest(dataset: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset.manifest(), indent=1))


def synth_clusters(n: int, centers, sigmas, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs; item ``i`` belongs to cluster ``i mod len(centers)``."""
    if n < 1:
        raise ValueError("n must be positive")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (len(centers),))
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % len(centers)
    noise = rng.standard_normal((n, centers.shape[1]))
    x = centers[labels] + sigmas[labels, None] * noise
    return Dataset(x=x, labels=labels, source=f"synth_clusters(seed={seed})")


# Strokes of ten digit-like glyphs in unit coordinates (x right, y down).
def _arc(cx, cy, rx, ry, a0, a1, k=14):
    t = np.deg2rad(np.linspace(a0, a1, k))
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


_GLYPHS = {
    0: [_arc(0.5, 0.5, 0.22, 0.32, 0, 360, 24)],
    1: [np.array([[0.42, 0.28], [0.55, 0.18], [0.55, 0.82]])],
    2: [np.vstack([_arc(0.5, 0.36, 0.2, 0.17, 200, 380), [[0.3, 0.8], [0.72, 0.8]]])],
    3: [_arc(0.48, 0.34, 0.2, 0.15, 210, 450), _arc(0.48, 0.64, 0.22, 0.17, 270, 510)],
    4: [np.array([[0.6, 0.82], [0.6, 0.18], [0.28, 0.6], [0.75, 0.6]])],
    5: [np.vstack([[[0.7, 0.2], [0.36, 0.2], [0.33, 0.46]], _arc(0.48, 0.6, 0.22, 0.2, 230, 500)])],
    6: [np.vstack([[[0.62, 0.18]], _arc(0.5, 0.62, 0.2, 0.2, 200, 560)])],
    7: [np.array([[0.28, 0.2], [0.72, 0.2], [0.45, 0.82]])],
    8: [_arc(0.5, 0.33, 0.17, 0.15, 0, 360, 20), _arc(0.5, 0.65, 0.21, 0.18, 0, 360, 20)],
    9: [np.vstack([_arc(0.5, 0.36, 0.19, 0.17, -20, 340, 20), [[0.68, 0.4], [0.6, 0.82]]])],
}

# Minority writing styles: slashed 0, serif 1, looped 2, flat-top 3, open 4,
# angular 5, straight-necked 6, crossed 7, crossed-loop 8, curled 9.
_VARIANTS = {
    0: [_arc(0.5, 0.5, 0.13, 0.32, 0, 360, 24), np.array([[0.6, 0.25], [0.4, 0.75]])],
    1: [np.array([[0.38, 0.3], [0.52, 0.18], [0.52, 0.82]]), np.array([[0.36, 0.82], [0.68, 0.82]])],
    2: [np.vstack([_arc(0.5, 0.34, 0.2, 0.15, 200, 380), [[0.36, 0.74]], _arc(0.36, 0.76, 0.07, 0.06, -90, 200, 10)[::-1], [[0.74, 0.8]]])],
    3: [np.array([[0.3, 0.2], [0.7, 0.2], [0.48, 0.46]]), _arc(0.48, 0.64, 0.22, 0.18, 270, 510)],
    4: [np.array([[0.3, 0.18], [0.3, 0.55], [0.75, 0.55]]), np.array([[0.64, 0.3], [0.64, 0.84]])],
    5: [np.array([[0.36, 0.2], [0.7, 0.2]]), np.vstack([[[0.36, 0.2], [0.34, 0.48], [0.66, 0.5], [0.68, 0.76], [0.32, 0.8]]])],
    6: [np.vstack([[[0.66, 0.2], [0.36, 0.5]], _arc(0.5, 0.64, 0.17, 0.16, 200, 560)])],
    7: [np.array([[0.28, 0.2], [0.72, 0.2], [0.45, 0.82]]), np.array([[0.4, 0.5], [0.68, 0.5]])],
    8: [np.vstack([_arc(0.5, 0.32, 0.15, 0.13, 90, 450, 20)]), np.array([[0.38, 0.42], [0.66, 0.82]]), np.array([[0.62, 0.42], [0.34, 0.82]])],
    9: [np.vstack([_arc(0.5, 0.36, 0.19, 0.17, -20, 340, 20), [[0.69, 0.4]]]), _arc(0.5, 0.42, 0.19, 0.4, 0, 100, 10)],
}


def _render(polylines, size: int, thickness: float) -> np.ndarray:
    grid = (np.arange(size) + 0.5) / size
    px, py = np.meshgrid(grid, grid)
    pts = np.column_stack([px.ravel(), py.ravel()])
    best = np.full(len(pts), np.inf)
    for line in polylines:
        a, b = line[:-1], line[1:]
        ab = b - a
        denom = np.maximum(np.sum(ab * ab, axis=1), 1e-12)
        t = np.clip(((pts[:, None, :] - a[None]) * ab[None]).sum(-1) / denom, 0.0, 1.0)
        closest = a[None] + t[..., None] * ab[None]
        dist = np.sqrt(((pts[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)
        best = np.minimum(best, dist)
    # one-pixel anti-aliased edge
    img = np.clip(1.0 - (best * size - thickness) / 1.0, 0.0, 1.0)
    return img.reshape(size, size)


def synth_glyphs(n_per_class: int, classes=range(10), size: int = 28, seed: int = 0,
                 distortion: float = 1.0, tail: float = 0.6, style_mix: float = 0.0) -> Dataset:
    """Digit-like stroke images with random pose and shape deformation.

    Each item draws a severity ``distortion * (0.5 + Exp(tail))`` scaling its rotation, scale,
    shear, translation and control-point jitter, so most items sit near the
    class prototype and a tail is strongly deformed.  With ``style_mix > 0``
    each item is drawn in an alternative writing style of its class with
    that probability, giving classes a minority mode as handwritten digits have.
    """
    if not 0.0 <= style_mix <= 1.0:
        raise ValueError(f"style_mix must lie in [0, 1], got {style_mix}")
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in classes:
        for _ in range(n_per_class):
            severity = distortion * (0.5 + rng.exponential(tail))
            rot = np.deg2rad(rng.normal(0.0, 8.0) * severity)
            scale = np.exp(rng.normal(0.0, 0.06) * severity)
            shear = rng.normal(0.0, 0.1) * severity
            shift = rng.normal(0.0, 0.04, size=2) * severity
            mat = scale * np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]]) @ np.array([[1.0, shear], [0.0, 1.0]])
            strokes = _GLYPHS[label]
            if style_mix > 0 and rng.random() < style_mix:
                strokes = _VARIANTS[label]
            lines = []
            for line in strokes:
                jitter = rng.normal(0.0, 0.025 * severity, size=line.shape)
                pts = (line + jitter - 0.5) @ mat.T + 0.5 + shift
                lines.append(pts)
            thickness = max(0.6, rng.normal(1.3, 0.25))
            images.append(_render(lines, size, thickness))
            labels.append(label)
    images = np.asarray(images)
    return Dataset(x=images.reshape(len(images), -1), labels=np.asarray(labels), shape=(size, size),
                   source=f"synth_glyphs(seed={seed})" if style_mix == 0 else f"synth_glyphs(seed={seed}, style_mix={style_mix})")


def make_congealed_dataset(class_images, m: int, spec: CongealSpec = CongealSpec(), seed: int = 0,
                           aligned=None) -> Dataset:
    """Replace a seeded random subset of ``m`` images by their congealed versions.

    ``aligned`` may carry a precomputed ``congeal_set`` result for the same
    images, so several replacement counts can share one congealing run.
    """
    if isinstance(class_images, Dataset):
        base = class_images
    else:
        arr = np.asarray(class_images, dtype=float)
        base = Dataset(x=arr.reshape(len(arr), -1), shape=arr.shape[1:])
    n = len(base)
    if not 0 <= m <= n:
        raise ValueError(f"m must lie in [0, {n}], got {m}")
    x = base.x.copy()
    flags = np.zeros(n, dtype=bool)
    if m > 0:
        if aligned is None:
            aligned = congeal_set(base.images(), spec)
        aligned = np.asarray(getattr(aligned, "images", aligned), dtype=float).reshape(n, -1)
        chosen = np.random.default_rng(seed).choice(n, size=m, replace=False)
        x[chosen] = aligned[chosen]
        flags[chosen] = True
    return Dataset(x=x, labels=base.labels, congealed=flags, shape=base.shape,
                   source=f"{base.source} congealed m={m} seed={seed}", origin=base.origin)


def save_dataset(dataset: Dataset, directory) -> list:
    """Write ``images.idx``, ``labels.idx`` (if labelled) and ``dataset.json``.

    Image data in [0, 1] is stored as bytes; other vectors as big-endian
    doubles, so both round-trip exactly through :func:`load_dataset`.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "images.idx", directory / "dataset.json"]
    as_bytes = np.rint(np.clip(dataset.x, 0.0, 1.0) * 255.0) / 255.0
    if len(dataset.shape) == 2 and np.array_equal(as_bytes, dataset.x):
        write_idx(dataset, paths[0])
    else:
        paths[0].write_bytes(encode_idx(dataset.x.astype(">f8")))
    if dataset.labels is not None:
        paths.append(directory / "labels.idx")
        paths[-1].write_bytes(encode_idx(dataset.labels.astype(np.uint8)))
    doc = dataset.manifest()
    doc["origin"] = dataset.origin.tolist()
    paths[1].write_text(json.dumps(doc, indent=1))
    return paths


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    doc = json.loads((directory / "dataset.json").read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported dataset manifest version {doc.get('version')!r}")
    raw = parse_idx((directory / "images.idx").read_bytes())
    x = raw.reshape(len(raw), -1).astype(float)
    if raw.dtype == np.uint8:
        x = x / 255.0
    labels = None
    if (directory / "labels.idx").exists():
        labels = parse_idx((directory / "labels.idx").read_bytes(), LABEL_MAGIC).astype(np.intp)
        if len(labels) != len(x):
            raise IdxCountMismatchError(f"{len(x)} items but {len(labels)} labels")
    if len(x) != doc["n"]:
        raise ValueError(f"manifest declares {doc['n']} items, file holds {len(x)}")
    flags = np.zeros(len(x), dtype=bool)
    flags[np.asarray(doc["congealed_ids"], dtype=np.intp)] = True
    return Dataset(x=x, labels=labels, congealed=flags, shape=tuple(doc["shape"]), source=doc["source"],
                   origin=doc.get("origin"))
