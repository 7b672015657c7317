"""Federated mining inside one pool.

Each epoch the manager broadcasts the model, every miner computes the
full-batch gradient of the mean squared error on its shard and uploads it
encrypted under the manager's key, and the manager decrypts, takes the
sample-weighted mean and steps the model.
"""

import math
import random
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from phe import paillier
from pydantic import BaseModel, ConfigDict, Field

from pofl_sim.errors import (
    DecryptionError,
    DivergenceError,
    EmptyShardError,
    HEOverflowError,
    ShapeError,
)
from pofl_sim.federated.datasets import DataShard, Dataset
from pofl_sim.federated.model import FloatArray, Layer, ModelParams, sigmoid
from pofl_sim.verification.he import (
    UPDATE_FRACTIONAL_BITS,
    EncryptedArray,
    FixedPointEncoding,
    HEKeyPair,
    decrypt_array,
    encrypt_array,
)

logger = structlog.stdlib.get_logger()

DIVERGENCE_THRESHOLD = 1e12
# Decrypted gradient entries beyond this magnitude indicate a damaged ciphertext.
PLAUSIBLE_MAGNITUDE = 2.0**40
UPDATE_ENCODING = FixedPointEncoding(frac_bits=UPDATE_FRACTIONAL_BITS)


class TrainingConfig(BaseModel):
    """Learning rate and the simulated-time budget of one round of training."""

    model_config = ConfigDict(frozen=True)

    zeta: float = Field(ge=0.0, description="Learning rate")
    max_epochs: int = Field(ge=1)
    deadline: int | None = Field(
        default=None, ge=1, description="Simulated ticks before accuracy submission"
    )
    divergence_threshold: float = Field(default=DIVERGENCE_THRESHOLD, gt=0.0)

    def epoch_budget(self, epochs_per_tick: int = 1) -> int:
        if self.deadline is None:
            return self.max_epochs
        return min(self.max_epochs, self.deadline * epochs_per_tick)


@dataclass(frozen=True)
class GradientUpdate:
    """Per-array gradients (in ModelParams.arrays() order) from one miner."""

    grads: tuple[FloatArray, ...]
    sample_count: int
    loss: float
    owner: str = ""

    @property
    def shape(self) -> tuple[tuple[int, ...], ...]:
        return tuple(g.shape for g in self.grads)


@dataclass(frozen=True)
class EncryptedUpdate:
    """A gradient update in transit to the manager."""

    grads: tuple[EncryptedArray, ...]
    loss: EncryptedArray
    sample_count: int
    owner: str

    def payload_bytes(self) -> int:
        return sum(g.payload_bytes() for g in self.grads) + self.loss.payload_bytes()


@dataclass(frozen=True)
class EpochMetrics:
    """Training loss (and accuracy, when an evaluation set is given) per epoch.

    The loss of epoch e is measured on the model broadcast at the start of e.
    """

    epoch: int
    loss: float
    accuracy: float | None
    pool_id: str


@dataclass(frozen=True)
class TrainingResult:
    model: ModelParams
    metrics: tuple[EpochMetrics, ...]
    update_bytes: int = 0


def mse_loss(model: ModelParams, data: Dataset) -> float:
    """Mean over records of the summed squared output error."""
    residual = model.forward(data.features) - data.targets
    return float(np.mean(np.sum(residual**2, axis=1)))


def _check_shapes(model: ModelParams, data: Dataset) -> None:
    if data.feature_width != model.input_width:
        raise ShapeError(
            f"model expects {model.input_width} features, "
            f"shard has {data.feature_width}"
        )
    if data.targets.shape[1] != model.output_width:
        raise ShapeError(
            f"model has {model.output_width} outputs, "
            f"shard has {data.targets.shape[1]}"
        )


def local_gradient(shard: DataShard, model: ModelParams) -> GradientUpdate:
    """Full-batch gradient of the mean squared error on one shard.

    Raises:
        EmptyShardError: If the shard has no records.
        ShapeError: If the shard does not fit the model.
    """
    if shard.size == 0:
        raise EmptyShardError(f"shard of {shard.owner} is empty")
    data = shard.data
    _check_shapes(model, data)

    activations = [data.features]
    a = data.features
    for layer in model.layers[:-1]:
        a = sigmoid(layer.apply(a))
        activations.append(a)
    out = model.layers[-1].apply(a)
    residual = out - data.targets
    loss = float(np.mean(np.sum(residual**2, axis=1)))

    delta = 2.0 * residual / shard.size
    grads: list[FloatArray] = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a_prev = activations[i]
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ a_prev)
        if i > 0:
            delta = (delta @ layer.weights) * a_prev * (1.0 - a_prev)
    grads.reverse()
    return GradientUpdate(
        grads=tuple(grads), sample_count=shard.size, loss=loss, owner=shard.owner
    )


def encrypt_update(
    update: GradientUpdate,
    public_key: paillier.PaillierPublicKey,
    rng: random.Random | None = None,
) -> EncryptedUpdate:
    """Encrypt a miner's update under the manager's public key."""
    return EncryptedUpdate(
        grads=tuple(
            encrypt_array(public_key, g, UPDATE_ENCODING, rng) for g in update.grads
        ),
        loss=encrypt_array(public_key, np.array([update.loss]), UPDATE_ENCODING, rng),
        sample_count=update.sample_count,
        owner=update.owner,
    )


def decrypt_update(enc: EncryptedUpdate, keypair: HEKeyPair) -> GradientUpdate:
    """Recover an update on the manager side.

    Raises:
        DecryptionError: On a wrong key, a damaged ciphertext, or decrypted values
            too large to be a gradient.
    """
    try:
        grads = tuple(decrypt_array(keypair, g) for g in enc.grads)
        loss = float(decrypt_array(keypair, enc.loss)[0])
    except HEOverflowError as exc:
        raise DecryptionError(f"update from {enc.owner} does not decode") from exc
    if any(np.any(np.abs(g) > PLAUSIBLE_MAGNITUDE) for g in grads):
        raise DecryptionError(f"update from {enc.owner} decodes out of range")
    return GradientUpdate(
        grads=grads, sample_count=enc.sample_count, loss=loss, owner=enc.owner
    )


def aggregate(updates: Sequence[GradientUpdate]) -> GradientUpdate:
    """Sample-count-weighted mean of the updates.

    Raises:
        ValueError: If there are no updates.
        ShapeError: If the updates disagree in shape.
    """
    if not updates:
        raise ValueError("nothing to aggregate")
    shape = updates[0].shape
    for u in updates[1:]:
        if u.shape != shape:
            raise ShapeError(
                f"update from {u.owner} has shape {u.shape}, expected {shape}"
            )
    total = sum(u.sample_count for u in updates)
    grads = tuple(
        np.sum([u.grads[j] * u.sample_count for u in updates], axis=0) / total
        for j in range(len(shape))
    )
    loss = sum(u.loss * u.sample_count for u in updates) / total
    return GradientUpdate(grads=grads, sample_count=total, loss=loss, owner="aggregate")


def apply_update(
    model: ModelParams, update: GradientUpdate, zeta: float
) -> ModelParams:
    """model - zeta * gradient, preserving the model's shape."""
    expected = tuple(a.shape for a in model.arrays())
    if update.shape != expected:
        raise ShapeError(
            f"update shape {update.shape} does not match model {expected}"
        )
    layers = tuple(
        Layer(
            weights=layer.weights - zeta * update.grads[2 * i],
            bias=layer.bias - zeta * update.grads[2 * i + 1],
        )
        for i, layer in enumerate(model.layers)
    )
    return ModelParams(layers=layers)


def _accuracy(model: ModelParams, data: Dataset | None) -> float | None:
    if data is None or data.labels is None:
        return None
    return float(np.mean(model.predict_labels(data.features) == data.labels))


def _check_divergence(
    updates: Sequence[GradientUpdate], threshold: float, pool_id: str, epoch: int
) -> None:
    # called on plaintext updates, ahead of encrypt_update
    total = sum(u.sample_count for u in updates)
    loss = sum(u.loss * u.sample_count for u in updates) / total
    bounded = all(
        np.all(np.abs(g) <= PLAUSIBLE_MAGNITUDE) for u in updates for g in u.grads
    )
    if not bounded or not math.isfinite(loss) or loss > threshold:
        logger.warning("training_diverged", pool_id=pool_id, epoch=epoch)
        raise DivergenceError(epoch=epoch, loss=loss)


def train_pool(
    model0: ModelParams,
    shards: Sequence[DataShard],
    cfg: TrainingConfig,
    *,
    keypair: HEKeyPair | None = None,
    rng: random.Random | None = None,
    pool_id: str = "pool",
    eval_set: Dataset | None = None,
    epochs_per_tick: int = 1,
) -> TrainingResult:
    """Run federated batch gradient descent until the epoch budget is spent.

    With a key pair, every update travels encrypted and is decrypted by the
    manager before aggregation.

    Raises:
        EmptyShardError: If there are no shards.
        DivergenceError: If the loss becomes non-finite or exceeds the threshold,
            or a gradient leaves the range an encrypted update can carry.
    """
    if not shards:
        raise EmptyShardError(f"{pool_id} has no shards to train on")
    model = model0
    metrics: list[EpochMetrics] = []
    update_bytes = 0
    for epoch in range(1, cfg.epoch_budget(epochs_per_tick) + 1):
        updates = [local_gradient(shard, model) for shard in shards]
        _check_divergence(updates, cfg.divergence_threshold, pool_id, epoch)
        if keypair is not None:
            sealed = [encrypt_update(u, keypair.public_key, rng) for u in updates]
            update_bytes += sum(s.payload_bytes() for s in sealed)
            updates = [decrypt_update(s, keypair) for s in sealed]
        combined = aggregate(updates)
        loss = combined.loss
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                loss=loss,
                accuracy=_accuracy(model, eval_set),
                pool_id=pool_id,
            )
        )
        model = apply_update(model, combined, cfg.zeta)
        logger.debug("epoch_complete", pool_id=pool_id, epoch=epoch, loss=loss)
    logger.info(
        "training_complete",
        pool_id=pool_id,
        epochs=len(metrics),
        final_loss=metrics[-1].loss if metrics else None,
    )
    return TrainingResult(
        model=model, metrics=tuple(metrics), update_bytes=update_bytes
    )


def centralized_bgd(
    model0: ModelParams, data: Dataset, cfg: TrainingConfig
) -> TrainingResult:
    """Full-batch gradient descent on one machine; the federation reference."""
    shard = DataShard(owner="central", data=data)
    return train_pool(model0, [shard], cfg, pool_id="central")


def epochs_to_threshold(
    metrics: Sequence[EpochMetrics],
    *,
    loss: float | None = None,
    accuracy: float | None = None,
) -> int | None:
    """First epoch whose loss is at most `loss` (or accuracy at least `accuracy`)."""
    if (loss is None) == (accuracy is None):
        raise ValueError("give exactly one of loss or accuracy")
    for m in metrics:
        if loss is not None and m.loss <= loss:
            return m.epoch
        if accuracy is not None and (m.accuracy or 0.0) >= accuracy:
            return m.epoch
    return None
