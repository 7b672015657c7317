"""Feedforward models as plain numpy parameter stacks.

Hidden layers use the logistic sigmoid, the last layer is linear. A single
layer is ordinary linear regression.
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from pofl_sim.errors import ShapeError

FloatArray = npt.NDArray[np.float64]


def sigmoid(z: FloatArray) -> FloatArray:
    """Logistic sigmoid, evaluated without overflow for large |z|."""
    out: FloatArray = np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)))
    return out


@dataclass(frozen=True)
class Layer:
    """Weights (out x in) and bias (out)."""

    weights: FloatArray
    bias: FloatArray

    @property
    def in_width(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_width(self) -> int:
        return int(self.weights.shape[0])

    def apply(self, x: FloatArray) -> FloatArray:
        out: FloatArray = x @ self.weights.T + self.bias
        return out


@dataclass(frozen=True)
class ModelParams:
    """An ordered stack of layers whose widths chain.

    Raises:
        ShapeError: If widths do not chain or an entry is not finite.
    """

    layers: tuple[Layer, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.out_width,):
                raise ShapeError(f"layer {i} has mismatched weight and bias shapes")
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
                raise ShapeError(f"layer {i} has non-finite entries")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:], strict=False)):
            if a.out_width != b.in_width:
                raise ShapeError(
                    f"layer {i} outputs {a.out_width} values, "
                    f"layer {i + 1} expects {b.in_width}"
                )

    @classmethod
    def from_arrays(
        cls, arrays: Sequence[tuple[FloatArray, FloatArray]]
    ) -> "ModelParams":
        return cls(
            layers=tuple(
                Layer(
                    weights=np.array(w, dtype=np.float64, ndmin=2),
                    bias=np.array(b, dtype=np.float64, ndmin=1),
                )
                for w, b in arrays
            )
        )

    @classmethod
    def zeros(cls, widths: Sequence[int]) -> "ModelParams":
        """All-zero model with the given layer widths (inputs first)."""
        pairs = zip(widths, widths[1:], strict=False)
        return cls.from_arrays([(np.zeros((o, i)), np.zeros(o)) for i, o in pairs])

    @classmethod
    def random(
        cls, widths: Sequence[int], rng: np.random.Generator, scale: float = 0.5
    ) -> "ModelParams":
        return cls.from_arrays(
            [
                (rng.normal(0.0, scale, size=(o, i)), rng.normal(0.0, scale, size=o))
                for i, o in zip(widths, widths[1:], strict=False)
            ]
        )

    @property
    def input_width(self) -> int:
        return self.layers[0].in_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def shape(self) -> tuple[tuple[int, int], ...]:
        return tuple((layer.out_width, layer.in_width) for layer in self.layers)

    @property
    def first(self) -> Layer:
        return self.layers[0]

    @property
    def tail(self) -> tuple[Layer, ...]:
        return self.layers[1:]

    def arrays(self) -> Iterator[FloatArray]:
        """Weights then bias of every layer, in order."""
        for layer in self.layers:
            yield layer.weights
            yield layer.bias

    def flatten(self) -> FloatArray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: FloatArray) -> "ModelParams":
        """Same shape, entries taken from a flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.parameter_count:
            raise ShapeError(
                f"expected {self.parameter_count} entries, got {flat.size}"
            )
        layers = []
        offset = 0
        for layer in self.layers:
            w_size = layer.weights.size
            w = flat[offset : offset + w_size].reshape(layer.weights.shape)
            offset += w_size
            b = flat[offset : offset + layer.out_width]
            offset += layer.out_width
            layers.append(Layer(weights=w.copy(), bias=b.copy()))
        return ModelParams(layers=tuple(layers))

    @property
    def parameter_count(self) -> int:
        return sum(a.size for a in self.arrays())

    def forward(self, x: FloatArray) -> FloatArray:
        """Outputs for a batch of feature rows."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.input_width:
            raise ShapeError(
                f"model expects {self.input_width} features, got {a.shape[1]}"
            )
        for layer in self.layers[:-1]:
            a = sigmoid(layer.apply(a))
        return self.layers[-1].apply(a)

    def predict_labels(self, x: FloatArray) -> npt.NDArray[np.int64]:
        """Argmax class per row; ties resolve to the lowest index."""
        return np.argmax(self.forward(x), axis=1).astype(np.int64)


def forward_layers(layers: Sequence[Layer], activations: FloatArray) -> FloatArray:
    """Run `activations` through a tail of layers (sigmoid between, linear last)."""
    a = np.atleast_2d(np.asarray(activations, dtype=np.float64))
    for i, layer in enumerate(layers):
        if a.shape[1] != layer.in_width:
            raise ShapeError(
                f"layer expects {layer.in_width} inputs, got {a.shape[1]}"
            )
        a = layer.apply(a)
        if i < len(layers) - 1:
            a = sigmoid(a)
    return a
