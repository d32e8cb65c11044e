"""Multi-view datasets and the alignment engine.

On disk a dataset is a directory of headerless CSVs:

    view_0.csv ... view_{V-1}.csv   one row per sample, float cells
    labels.csv                      optional, one integer per line
    alignment.json                  optional, written by misalignment injection

All views share the sample count; view 0 is the reference frame, so labels
always describe view 0 rows. Misalignment permutes rows of views 1..V-1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import ShapeError


class DataFormatError(ValueError):
    """A dataset file is malformed; the message names the file and location."""


@dataclass
class MultiViewDataset:
    """V >= 2 feature matrices over the same samples, optional labels."""

    views: list[np.ndarray]
    labels: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self) -> None:
        if len(self.views) < 2:
            raise ShapeError(f"need at least 2 views, got {len(self.views)}")
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        n = self.views[0].shape[0]
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise ShapeError(f"view {i} must be 2-D, got shape {v.shape}")
            if v.shape[0] != n:
                raise ShapeError(
                    f"view {i} has {v.shape[0]} rows, view 0 has {n}"
                )
            if v.shape[1] < 1:
                raise ShapeError(f"view {i} has no columns")
            if not np.all(np.isfinite(v)):
                raise DataFormatError(f"view {i} contains non-finite values")
        if n < 1:
            raise ShapeError("dataset has no samples")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (n,):
                raise ShapeError(
                    f"labels shape {lab.shape} does not match {n} samples"
                )
            if not np.issubdtype(lab.dtype, np.integer):
                if not np.all(lab == np.round(lab)):
                    raise DataFormatError("labels must be integers")
                lab = lab.astype(np.int64)
            lab = lab.astype(np.int64)
            if lab.min() < 0:
                raise DataFormatError(f"labels must be >= 0, found {lab.min()}")
            k = int(lab.max()) + 1
            present = np.unique(lab)
            if len(present) != k:
                missing = sorted(set(range(k)) - set(present.tolist()))
                raise DataFormatError(
                    f"labels must cover every class in [0, {k}), missing {missing}"
                )
            self.labels = lab

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    @property
    def n_clusters(self) -> int | None:
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1


@dataclass
class AlignmentMap:
    """Row permutations applied per view plus the aligned-sample mask.

    ``permutations[v][i]`` gives the original row index now sitting at row i
    of view v; view 0 is always the identity. Every index in ``aligned_mask``
    is a fixed point of every permutation, and the mask size equals
    round(ratio * n).
    """

    permutations: list[np.ndarray]
    aligned_mask: np.ndarray
    ratio: float
    seed: int | None = None

    def __post_init__(self) -> None:
        self.permutations = [
            np.asarray(p, dtype=np.int64) for p in self.permutations
        ]
        n = self.permutations[0].shape[0]
        self.aligned_mask = np.asarray(self.aligned_mask, dtype=bool)
        if self.aligned_mask.shape != (n,):
            raise ShapeError(
                f"aligned_mask shape {self.aligned_mask.shape} does not match n={n}"
            )
        if not np.array_equal(self.permutations[0], np.arange(n)):
            raise ValueError("view 0 permutation must be the identity")
        ident = np.arange(n)
        for v, p in enumerate(self.permutations):
            if p.shape != (n,):
                raise ShapeError(f"permutation {v} has shape {p.shape}, want ({n},)")
            if not np.array_equal(np.sort(p), ident):
                raise ValueError(f"permutation {v} is not a bijection on [0, {n})")
            if not np.array_equal(p[self.aligned_mask], ident[self.aligned_mask]):
                raise ValueError(
                    f"permutation {v} moves rows flagged as aligned"
                )
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        want = int(round(self.ratio * n))
        got = int(self.aligned_mask.sum())
        if got != want:
            raise ValueError(
                f"aligned_mask has {got} fixed rows, ratio {self.ratio} "
                f"over n={n} requires {want}"
            )

    @property
    def n_samples(self) -> int:
        return self.permutations[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.permutations)


def _read_matrix(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(cells)} cells, expected {width}"
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric cell at row {lineno}, column {col}: "
                        f"{cell.strip()!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: file contains no data rows")
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-integer label at row {lineno}: {line!r}"
                ) from None
    if not values:
        raise DataFormatError(f"{path}: file contains no labels")
    return np.asarray(values, dtype=np.int64)


def load_labels(path: str | Path) -> np.ndarray:
    """Read a one-integer-per-line label file."""
    return _read_labels(Path(path))


def load_dataset(directory: str | Path) -> MultiViewDataset:
    """Read view_{v}.csv files (and labels.csv if present) from a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"{directory}: not a directory")
    view_paths = []
    v = 0
    while (directory / f"view_{v}.csv").exists():
        view_paths.append(directory / f"view_{v}.csv")
        v += 1
    if len(view_paths) < 2:
        raise DataFormatError(
            f"{directory}: found {len(view_paths)} view files, need view_0.csv "
            f"and view_1.csv at minimum"
        )
    views = [_read_matrix(p) for p in view_paths]
    for i, view in enumerate(views[1:], start=1):
        if view.shape[0] != views[0].shape[0]:
            raise DataFormatError(
                f"{view_paths[i]}: has {view.shape[0]} rows, view_0.csv has "
                f"{views[0].shape[0]}"
            )
    labels = None
    labels_path = directory / "labels.csv"
    if labels_path.exists():
        labels = _read_labels(labels_path)
        if labels.shape[0] != views[0].shape[0]:
            raise DataFormatError(
                f"{labels_path}: has {labels.shape[0]} labels, views have "
                f"{views[0].shape[0]} rows"
            )
    return MultiViewDataset(views=views, labels=labels, name=directory.name)


def save_dataset(dataset: MultiViewDataset, directory: str | Path) -> None:
    """Write view CSVs (and labels.csv when present) into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for v, view in enumerate(dataset.views):
        with open(directory / f"view_{v}.csv", "w", encoding="utf-8") as fh:
            for row in view:
                fh.write(",".join(format(x, ".17g") for x in row))
                fh.write("\n")
    if dataset.labels is not None:
        with open(directory / "labels.csv", "w", encoding="utf-8") as fh:
            for lab in dataset.labels:
                fh.write(f"{int(lab)}\n")


def minmax_normalize(dataset: MultiViewDataset) -> MultiViewDataset:
    """Scale each feature column to [0, 1]; constant columns map to 0."""
    views = []
    for view in dataset.views:
        lo = view.min(axis=0)
        hi = view.max(axis=0)
        span = hi - lo
        safe = np.where(span > 0.0, span, 1.0)
        out = (view - lo) / safe
        out[:, span == 0.0] = 0.0
        views.append(out)
    return MultiViewDataset(views=views, labels=dataset.labels, name=dataset.name)


def make_synthetic(
    n: int,
    k: int,
    n_views: int,
    dims: list[int],
    separation: float = 10.0,
    noise: float = 0.5,
    seed: int = 0,
) -> MultiViewDataset:
    """Sample a fully aligned mixture-of-Gaussians dataset.

    Each view draws k centers as separation * standard normal and adds
    noise * standard normal per sample. Labels repeat 0..k-1 round-robin, so
    class sizes differ by at most one.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < 2 * k:
        raise ValueError(f"need n >= 2k samples, got n={n} k={k}")
    if n_views < 2:
        raise ValueError(f"need at least 2 views, got {n_views}")
    if len(dims) != n_views:
        raise ShapeError(f"got {len(dims)} dims for {n_views} views")
    if any(d < 2 for d in dims):
        raise ValueError(f"all view dims must be >= 2, got {dims}")
    if separation <= 0.0:
        raise ValueError(f"separation must be positive, got {separation}")
    if noise < 0.0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % k
    views = []
    for dim in dims:
        centers = separation * rng.standard_normal((k, dim))
        samples = centers[labels] + noise * rng.standard_normal((n, dim))
        views.append(samples)
    return MultiViewDataset(
        views=views, labels=labels, name=f"synthetic-n{n}-k{k}-v{n_views}"
    )


def _derangement(size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of [0, size) without fixed points."""
    if size < 2:
        raise ValueError(f"no derangement exists for size {size}")
    while True:
        p = rng.permutation(size)
        if not np.any(p == np.arange(size)):
            return p


def inject_misalignment(
    dataset: MultiViewDataset, ratio: float, seed: int
) -> tuple[MultiViewDataset, AlignmentMap]:
    """Shuffle rows of views 1..V-1 so only round(ratio * n) stay aligned.

    The aligned subset is a prefix of one seeded permutation, which makes it
    uniformly random per call and nested across ratios at a fixed seed (a
    higher ratio only returns movers to their true rows). The rest of each
    view is rearranged by a derangement, so the fixed-point count is exact.
    Labels keep describing view 0 and are carried over unchanged.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    n = dataset.n_samples
    n_aligned = int(round(ratio * n))
    if n - n_aligned == 1:
        raise ValueError(
            f"ratio {ratio} over n={n} leaves exactly one unaligned row, "
            f"which cannot be moved"
        )
    rng = np.random.default_rng(seed)
    aligned_idx = np.sort(rng.permutation(n)[:n_aligned])
    mask = np.zeros(n, dtype=bool)
    mask[aligned_idx] = True
    moving = np.flatnonzero(~mask)
    permutations = [np.arange(n, dtype=np.int64)]
    views = [dataset.views[0].copy()]
    for v in range(1, dataset.n_views):
        perm = np.arange(n, dtype=np.int64)
        if moving.size >= 2:
            perm[moving] = moving[_derangement(moving.size, rng)]
        permutations.append(perm)
        views.append(dataset.views[v][perm])
    amap = AlignmentMap(
        permutations=permutations, aligned_mask=mask, ratio=ratio, seed=seed
    )
    return (
        MultiViewDataset(
            views=views, labels=dataset.labels, name=f"{dataset.name}-r{ratio:g}"
        ),
        amap,
    )


def apply_alignment(
    dataset: MultiViewDataset, alignment: AlignmentMap, invert: bool = False
) -> MultiViewDataset:
    """Apply (or undo) the per-view permutations of an alignment map."""
    if alignment.n_views != dataset.n_views:
        raise ShapeError(
            f"alignment covers {alignment.n_views} views, dataset has "
            f"{dataset.n_views}"
        )
    if alignment.n_samples != dataset.n_samples:
        raise ShapeError(
            f"alignment covers {alignment.n_samples} samples, dataset has "
            f"{dataset.n_samples}"
        )
    views = []
    for view, perm in zip(dataset.views, alignment.permutations):
        if invert:
            inverse = np.empty_like(perm)
            inverse[perm] = np.arange(perm.shape[0])
            views.append(view[inverse])
        else:
            views.append(view[perm])
    return MultiViewDataset(views=views, labels=dataset.labels, name=dataset.name)


def save_alignment(alignment: AlignmentMap, path: str | Path) -> None:
    """Serialize an alignment map as JSON."""
    payload = {
        "ratio": alignment.ratio,
        "seed": alignment.seed,
        "aligned_mask": alignment.aligned_mask.astype(int).tolist(),
        "permutations": [p.tolist() for p in alignment.permutations],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_alignment(path: str | Path) -> AlignmentMap:
    """Read an alignment map written by save_alignment."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from None
    for key in ("ratio", "aligned_mask", "permutations"):
        if key not in payload:
            raise DataFormatError(f"{path}: missing key {key!r}")
    return AlignmentMap(
        permutations=[np.asarray(p, dtype=np.int64) for p in payload["permutations"]],
        aligned_mask=np.asarray(payload["aligned_mask"], dtype=bool),
        ratio=float(payload["ratio"]),
        seed=payload.get("seed"),
    )
