"""Dense float64 primitives with explicit forward and backward passes.

Every op is a pair: the forward returns its output (and whatever it must
remember), the backward takes the upstream gradient plus that memory and
returns the gradient w.r.t. its input, accumulating parameter gradients
into ``Parameter.grad`` as a side effect.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gipa.exceptions import NumericError, ShapeError
from gipa.utils.validate import as_matrix, check_cols, check_rate, check_shape

logger = logging.getLogger(__name__)

DenseMatrix = np.ndarray


@dataclass(eq=False)
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False, repr=False)
    m1: np.ndarray = field(init=False, repr=False)
    m2: np.ndarray = field(init=False, repr=False)
    step_count: int = 0

    def __post_init__(self):
        self.value = as_matrix(self.value, self.name).copy()
        self.grad = np.zeros_like(self.value)
        self.m1 = np.zeros_like(self.value)
        self.m2 = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def glorot_uniform(name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(name, rng.uniform(-limit, limit, size=(fan_in, fan_out)))


def zeros(name: str, rows: int, cols: int) -> Parameter:
    return Parameter(name, np.zeros((rows, cols)))


def linear(x: DenseMatrix, w: Parameter, bias: Optional[Parameter] = None) -> DenseMatrix:
    check_cols(x, w.shape[0], f"input of {w.name}")
    out = x @ w.value
    if bias is not None:
        check_shape(bias.value, (1, w.shape[1]), bias.name)
        out = out + bias.value
    return out


def linear_backward(
    grad_out: DenseMatrix, x: DenseMatrix, w: Parameter, bias: Optional[Parameter] = None
) -> DenseMatrix:
    check_shape(grad_out, (x.shape[0], w.shape[1]), f"gradient of {w.name}")
    w.grad += x.T @ grad_out
    if bias is not None:
        bias.grad += grad_out.sum(axis=0, keepdims=True)
    return grad_out @ w.value.T


def relu(x: DenseMatrix) -> Tuple[DenseMatrix, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(grad_out: DenseMatrix, mask: np.ndarray) -> DenseMatrix:
    return np.where(mask, grad_out, 0.0)


def dropout(
    x: DenseMatrix, rate: float, rng: Optional[np.random.Generator], training: bool
) -> Tuple[DenseMatrix, Optional[np.ndarray]]:
    """Inverted dropout. The returned mask already carries the 1/(1-rate) scale;
    it is None whenever the op is the identity."""
    rate = check_rate(rate, "dropout rate")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: DenseMatrix, mask: Optional[np.ndarray]) -> DenseMatrix:
    return grad_out if mask is None else grad_out * mask


def concat_cols(xs: Sequence[DenseMatrix]) -> DenseMatrix:
    if not xs:
        raise ShapeError("concat_cols needs at least one matrix")
    rows = {x.shape[0] for x in xs}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols row mismatch: {sorted(rows)}")
    return np.concatenate(xs, axis=1)


def split_cols(grad: DenseMatrix, widths: Sequence[int]) -> List[DenseMatrix]:
    """Backward of concat_cols"""
    check_cols(grad, sum(widths), "concatenated gradient")
    return np.split(grad, np.cumsum(widths)[:-1], axis=1)


@dataclass(frozen=True)
class MlpSpec:
    # input width followed by the output width of every layer
    layer_widths: Tuple[int, ...]
    use_bias: Tuple[bool, ...]
    dropout_rate: float = 0.0
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ShapeError("an MLP needs at least one layer")
        if len(self.use_bias) != len(self.layer_widths) - 1:
            raise ShapeError("use_bias needs one flag per layer")
        if any(w < 1 for w in self.layer_widths):
            raise ShapeError(f"non-positive MLP width in {self.layer_widths}")
        if (self.hidden_activation, self.output_activation) != ("relu", "identity"):
            raise ValueError("only relu hidden / identity output activations are supported")
        check_rate(self.dropout_rate, "MLP dropout rate")

    @classmethod
    def build(cls, in_width: int, hidden: int, out_width: int, depth: int,
              bias: bool = True, dropout_rate: float = 0.0) -> "MlpSpec":
        if depth < 1:
            raise ShapeError(f"MLP depth must be >= 1, got {depth}")
        widths = (in_width,) + (hidden,) * (depth - 1) + (out_width,)
        return cls(widths, (bias,) * depth, dropout_rate)

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]


class Mlp:
    """linear -> ReLU -> dropout for hidden layers, plain linear for the last one."""

    def __init__(self, spec: MlpSpec, weights: List[Parameter], biases: List[Optional[Parameter]]):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        for k, w in enumerate(weights):
            check_shape(w.value, spec.layer_widths[k:k + 2], w.name)

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator, name: str) -> "Mlp":
        weights, biases = [], []
        for k in range(spec.num_layers):
            fan_in, fan_out = spec.layer_widths[k], spec.layer_widths[k + 1]
            weights.append(glorot_uniform(f"{name}.w{k}", fan_in, fan_out, rng))
            biases.append(zeros(f"{name}.b{k}", 1, fan_out) if spec.use_bias[k] else None)
        return cls(spec, weights, biases)

    def parameters(self) -> List[Parameter]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            if b is not None:
                params.append(b)
        return params

    def forward(self, x: DenseMatrix, training: bool = False,
                rng: Optional[np.random.Generator] = None):
        check_cols(x, self.spec.in_width, "MLP input")
        cache = []
        h = x
        last = self.spec.num_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = linear(h, w, b)
            if k == last:
                cache.append((h, None, None))
                h = z
                break
            a, relu_mask = relu(z)
            out, drop_mask = dropout(a, self.spec.dropout_rate, rng, training)
            cache.append((h, relu_mask, drop_mask))
            h = out
        return h, cache

    def backward(self, grad_out: DenseMatrix, cache) -> DenseMatrix:
        if len(cache) != self.spec.num_layers:
            raise ShapeError("MLP cache does not match the network depth")
        grad = grad_out
        for k in reversed(range(self.spec.num_layers)):
            x, relu_mask, drop_mask = cache[k]
            if relu_mask is not None:
                grad = relu_backward(dropout_backward(grad, drop_mask), relu_mask)
            grad = linear_backward(grad, x, self.weights[k], self.biases[k])
        return grad


def mlp_forward(mlp: Mlp, x: DenseMatrix, training: bool = False,
                rng: Optional[np.random.Generator] = None):
    return mlp.forward(x, training, rng)


def mlp_backward(mlp: Mlp, grad_out: DenseMatrix, cache) -> DenseMatrix:
    return mlp.backward(grad_out, cache)


def adamw_step(p: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """Decoupled weight decay followed by a bias-corrected Adam update."""
    if not np.all(np.isfinite(p.grad)):
        raise NumericError(f"non-finite gradient in {p.name}", tensor=p.name,
                           step=p.step_count)
    p.step_count += 1
    p.value -= lr * weight_decay * p.value
    p.m1 *= beta1
    p.m1 += (1.0 - beta1) * p.grad
    p.m2 *= beta2
    p.m2 += (1.0 - beta2) * p.grad * p.grad
    m_hat = p.m1 / (1.0 - beta1 ** p.step_count)
    v_hat = p.m2 / (1.0 - beta2 ** p.step_count)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    p.zero_grad()


class AdamW:
    def __init__(self, parameters: Sequence[Parameter], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        if lr < 0.0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"Invalid betas: ({beta1}, {beta2})")
        if eps < 0.0 or weight_decay < 0.0:
            raise ValueError(f"Invalid eps/weight decay: {eps}, {weight_decay}")
        self.parameters = list(parameters)
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.eps, self.weight_decay = eps, weight_decay
        logger.info("AdamW over %d tensors: lr=%s weight_decay=%s",
                    len(self.parameters), lr, weight_decay)

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self) -> None:
        # no tensor moves unless every gradient is finite
        for p in self.parameters:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in {p.name}", tensor=p.name,
                                   step=p.step_count)
        for p in self.parameters:
            adamw_step(p, self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)
