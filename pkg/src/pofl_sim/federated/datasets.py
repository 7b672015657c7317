"""Synthetic datasets and even partitioning across a pool's miners."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from pofl_sim.errors import EmptyShardError, ShapeError

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


@dataclass(frozen=True)
class Dataset:
    """Feature rows and 2-D targets; classification sets also carry labels."""

    features: FloatArray
    targets: FloatArray
    labels: IntArray | None = None

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise ShapeError("features and targets must be 2-D")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ShapeError("features and targets differ in record count")
        n = self.features.shape[0]
        if self.labels is not None and self.labels.shape != (n,):
            raise ShapeError("one label is needed per record")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_width(self) -> int:
        return int(self.features.shape[1])

    def subset(self, index: npt.NDArray[np.intp]) -> "Dataset":
        return Dataset(
            features=self.features[index],
            targets=self.targets[index],
            labels=None if self.labels is None else self.labels[index],
        )


@dataclass(frozen=True)
class DataShard:
    """The records one miner trains on."""

    owner: str
    data: Dataset

    @property
    def size(self) -> int:
        return len(self.data)


def partition_dataset(
    dataset: Dataset,
    k: int,
    seed: int,
    owners: Sequence[str] | None = None,
) -> list[DataShard]:
    """Split a dataset into k disjoint shards whose sizes differ by at most one.

    Raises:
        ValueError: If k < 1 or the owner list has the wrong length.
        EmptyShardError: If a miner would receive no records.
    """
    if k < 1:
        raise ValueError(f"pool size must be at least 1, got {k}")
    if len(dataset) == 0:
        raise EmptyShardError("cannot partition an empty dataset")
    if k > len(dataset):
        raise EmptyShardError(f"{k} miners but only {len(dataset)} records")
    owners = list(owners) if owners is not None else [f"miner-{i}" for i in range(k)]
    if len(owners) != k:
        raise ValueError(f"{len(owners)} owners for {k} shards")
    order = np.random.default_rng(seed).permutation(len(dataset))
    return [
        DataShard(owner=owner, data=dataset.subset(np.sort(part)))
        for owner, part in zip(owners, np.array_split(order, k), strict=True)
    ]


def merge_shards(shards: Sequence[DataShard]) -> Dataset:
    """Union of the shards' records, in shard order."""
    labels = [s.data.labels for s in shards]
    return Dataset(
        features=np.vstack([s.data.features for s in shards]),
        targets=np.vstack([s.data.targets for s in shards]),
        labels=None if any(x is None for x in labels) else np.concatenate(labels),
    )


def linear_regression_task(
    size: int, dimension: int, noise: float, seed: int
) -> Dataset:
    """y = x . w + b + noise with standard-normal features."""
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0, size=dimension)
    b = rng.normal(0.0, 1.0)
    x = rng.normal(0.0, 1.0, size=(size, dimension))
    y = x @ w + b + rng.normal(0.0, noise, size=size)
    return Dataset(features=x, targets=y.reshape(-1, 1))


def classification_task(
    size: int,
    dimension: int,
    classes: int,
    seed: int,
    spread: float = 0.6,
) -> Dataset:
    """Gaussian clusters around random class centroids, with one-hot targets."""
    if classes < 2:
        raise ValueError("a classification task needs at least two classes")
    rng = np.random.default_rng(seed)
    centroids = rng.normal(0.0, 2.0, size=(classes, dimension))
    labels = rng.integers(0, classes, size=size)
    x = centroids[labels] + rng.normal(0.0, spread, size=(size, dimension))
    return Dataset(
        features=x,
        targets=np.eye(classes)[labels],
        labels=labels.astype(np.int64),
    )
