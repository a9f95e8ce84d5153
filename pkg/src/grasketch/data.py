"""Dataset construction: synthetic Grassmannian benchmarks and image-set ingestion.

Image decoding is limited to binary PGM (P5); other formats are expected to be
converted externally so ingestion stays bit-exact and dependency-free.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from grasketch.classify import LabeledDataset
from grasketch.subspace import DimensionError, Subspace, _oriented_q, random_subspace, perturb_subspace


class ManifestError(ValueError):
    """Bad dataset manifest: parse failure, missing files, inconsistent shapes."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    label: int
    kind: str  # "synthetic" | "images"
    seed: int | None = None
    directory: str | None = None
    role: str = "train"  # "train" | "test"
    n: int | None = None  # per-entry override of the manifest ambient dim
    k: int | None = None


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    n: int
    k: int
    entries: tuple

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate sample ids: {dupes}")


def synth_benchmark(
    classes: int,
    per_class_train: int,
    per_class_test: int,
    n: int,
    k: int,
    sigma: float,
    seed: int,
) -> tuple[LabeledDataset, LabeledDataset]:
    """One random base subspace per class; train and test samples are independent
    perturbations of the base at noise level sigma."""
    if classes < 1 or per_class_train < 1 or per_class_test < 1:
        raise ValueError("all counts must be >= 1")
    if k < 1 or k > n:
        raise DimensionError(f"need 1 <= k <= n, got n={n}, k={k}")
    seeds = np.random.default_rng(seed).integers(0, 2**63, size=classes * (1 + per_class_train + per_class_test))
    pos = 0
    train_samples, train_labels = [], []
    test_samples, test_labels = [], []
    for cls in range(classes):
        base = random_subspace(n, k, int(seeds[pos])); pos += 1
        for _ in range(per_class_train):
            train_samples.append(perturb_subspace(base, sigma, int(seeds[pos]))); pos += 1
            train_labels.append(cls)
        for _ in range(per_class_test):
            test_samples.append(perturb_subspace(base, sigma, int(seeds[pos]))); pos += 1
            test_labels.append(cls)
    return (
        LabeledDataset(train_samples, np.array(train_labels), classes),
        LabeledDataset(test_samples, np.array(test_labels), classes),
    )


def bilinear_resize(image: np.ndarray, target_side: int) -> np.ndarray:
    """Corner-aligned bilinear resampling to target_side x target_side."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    ys = np.linspace(0.0, h - 1.0, target_side)
    xs = np.linspace(0.0, w - 1.0, target_side)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2) if h > 1 else np.zeros(target_side, int)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2) if w > 1 else np.zeros(target_side, int)
    fy = (ys - y0) if h > 1 else np.zeros(target_side)
    fx = (xs - x0) if w > 1 else np.zeros(target_side)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = image[np.ix_(y0, x0)] * (1 - fx) + image[np.ix_(y0, x1)] * fx
    bot = image[np.ix_(y1, x0)] * (1 - fx) + image[np.ix_(y1, x1)] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def imageset_to_subspace(images, target_side: int, k: int) -> Subspace:
    """Top-k left singular subspace of the resized, flattened image stack.

    When the stack has fewer columns than pixels, the singular subspace comes
    from the eigendecomposition of the small column Gram matrix.
    """
    images = list(images)
    if len(images) < k:
        raise ValueError(f"need at least k={k} images, got {len(images)}")
    n = target_side * target_side
    cols = np.stack(
        [bilinear_resize(np.asarray(img, dtype=np.float64), target_side).ravel() for img in images],
        axis=1,
    )
    count = cols.shape[1]
    if count < n:
        gram = cols.T @ cols
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:k]
        if evals[order[-1]] <= 0:
            raise ValueError(f"image stack has rank below k={k}")
        u = cols @ (evecs[:, order] / np.sqrt(evals[order]))
    else:
        u, _, _ = np.linalg.svd(cols, full_matrices=False)
        u = u[:, :k]
    # re-orthonormalise so the Subspace invariant holds to full tolerance
    return Subspace(_oriented_q(u))


def read_pgm(path) -> np.ndarray:
    """Binary PGM (P5) reader; returns floats scaled into [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise ValueError(f"not a binary PGM (P5) file: {path}")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    dtype = ">u2" if maxval > 255 else np.uint8
    pixels = np.frombuffer(data, dtype=dtype, offset=pos, count=width * height)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM writer for values in [0, 1]."""
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())


def make_synthetic_image_stack(
    directory, count: int, side: int, k: int, seed: int, noise: float = 0.0,
    truth: Subspace | None = None,
) -> Subspace:
    """Write `count` PGM images spanning a rank-k space; returns that space.

    The spanned space is drawn at random unless `truth` is supplied.
    """
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    if truth is None:
        truth = random_subspace(side * side, k, seed)
    coeffs = rng.standard_normal((k, count))
    stack = truth.basis @ coeffs
    if noise:
        stack = stack + noise * rng.standard_normal(stack.shape)
    lo, hi = stack.min(), stack.max()
    stack = (stack - lo) / (hi - lo)
    for j in range(count):
        write_pgm(os.path.join(directory, f"img{j:04d}.pgm"), stack[:, j].reshape(side, side))
    return truth


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        entries = tuple(
            ManifestEntry(
                id=str(e["id"]),
                label=int(e["label"]),
                kind=e["kind"],
                seed=e.get("seed"),
                directory=e.get("dir"),
                role=e.get("role", "train"),
                n=e.get("n"),
                k=e.get("k"),
            )
            for e in raw["entries"]
        )
        manifest = DatasetManifest(int(raw["n"]), int(raw["k"]), entries)
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest {path}: {exc}") from exc
    if not entries:
        raise ManifestError("empty manifest")
    for e in entries:
        if e.kind not in ("synthetic", "images"):
            raise ManifestError(f"entry {e.id}: unknown kind {e.kind!r}")
        if e.kind == "synthetic" and e.seed is None:
            raise ManifestError(f"entry {e.id}: synthetic entries need a seed")
        if e.kind == "images" and not e.directory:
            raise ManifestError(f"entry {e.id}: image entries need a dir")
    return manifest


def materialise(manifest: DatasetManifest, base_dir: str = ".") -> LabeledDataset:
    """Build every subspace the manifest describes; failures are reported per id."""
    samples = []
    labels = []
    failures = []
    shapes = {}
    for entry in manifest.entries:
        entry_n = entry.n if entry.n is not None else manifest.n
        entry_k = entry.k if entry.k is not None else manifest.k
        side = int(round(entry_n ** 0.5))
        try:
            if entry.kind == "synthetic":
                sub = random_subspace(entry_n, entry_k, entry.seed)
            else:
                directory = os.path.join(base_dir, entry.directory)
                if not os.path.isdir(directory):
                    raise ManifestError(f"missing image directory: {directory}")
                if side * side != entry_n:
                    raise ManifestError(
                        f"ambient n={entry_n} is not a square image size"
                    )
                files = sorted(
                    f for f in os.listdir(directory) if f.lower().endswith(".pgm")
                )
                if not files:
                    raise ManifestError(f"no .pgm files in {directory}")
                images = [read_pgm(os.path.join(directory, f)) for f in files]
                sub = imageset_to_subspace(images, side, entry_k)
            shapes.setdefault((sub.n, sub.k), []).append(entry.id)
            samples.append(sub)
            labels.append(entry.label)
        except (ManifestError, ValueError, OSError) as exc:
            failures.append(f"{entry.id}: {exc}")
    if failures:
        raise ManifestError("; ".join(failures))
    if len(shapes) > 1:
        detail = "; ".join(
            f"G({k},{n}): {','.join(ids)}" for (n, k), ids in sorted(shapes.items())
        )
        raise ManifestError(f"inconsistent dimensions across entries: {detail}")
    class_count = max(labels) + 1
    return LabeledDataset(samples, np.array(labels), class_count)


def split_by_role(manifest: DatasetManifest, dataset: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """Split a materialised dataset into the manifest's train/test roles."""
    roles = [e.role for e in manifest.entries]
    idx_train = [i for i, r in enumerate(roles) if r != "test"]
    idx_test = [i for i, r in enumerate(roles) if r == "test"]
    def take(idx):
        return LabeledDataset(
            [dataset.samples[i] for i in idx], dataset.labels[idx], dataset.class_count
        )
    return take(idx_train), take(idx_test)
