"""
Energy-Inspired Models - Networks

Tanh multilayer perceptrons registered in a ParamStore: the energy U(x)
and the small variational network used by HIS.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from autograd import ParamStore, Tensor, as_tensor, broadcast_to, reshape, tanh, transpose
from stats import Rng


class TanhMlp:
    """
    Fully connected network with tanh hidden layers and a linear output.

    Weights start as U(−1/√fan_in, 1/√fan_in); with zero_last the output
    layer starts at zero, so the network initially outputs zeros.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        sizes: Sequence[int],
        rng: Rng,
        zero_last: bool = True,
    ):
        if len(sizes) < 2:
            raise ValueError(f"An MLP needs at least input and output sizes, got {sizes}")
        self.prefix = prefix
        self.sizes = tuple(int(s) for s in sizes)
        self.layers: List[Tuple[Tensor, Tensor]] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = i == len(self.sizes) - 2
            if last and zero_last:
                weight = np.zeros((fan_in, fan_out))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                weight = bound * (2.0 * rng.uniform((fan_in, fan_out)) - 1.0)
            self.layers.append(
                (store.add(f"{prefix}.w{i}", weight), store.add(f"{prefix}.b{i}", np.zeros(fan_out)))
            )

    def hidden(self, x: Tensor) -> List[Tensor]:
        """Activations of every hidden layer."""
        h = as_tensor(x)
        activations = []
        for weight, bias in self.layers[:-1]:
            h = tanh(h @ weight + bias)
            activations.append(h)
        return activations

    def head(self, h: Tensor) -> Tensor:
        weight, bias = self.layers[-1]
        return h @ weight + bias

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        activations = self.hidden(x)
        return self.head(activations[-1] if activations else x)


class EnergyNet(TanhMlp):
    """U(x): d → 20 → 20 → 1 tanh network, one energy per row."""

    def __init__(self, store: ParamStore, rng: Rng, dim: int = 2, hidden: Sequence[int] = (20, 20), prefix: str = "energy"):
        super().__init__(store, prefix, (dim, *hidden, 1), rng, zero_last=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = super().__call__(x)
        return reshape(out, out.shape[:1])

    def input_gradient(self, x: Tensor) -> Tensor:
        """
        ∇ₓU as an explicit gradient network.

        Backpropagation through the tanh layers written out with first-order
        graph operations, so the result is differentiable w.r.t. both x and
        the weights.
        """
        x = as_tensor(x)
        activations = self.hidden(x)
        last_weight = self.layers[-1][0]
        delta = broadcast_to(transpose(last_weight), (x.shape[0], last_weight.shape[0]))
        for (weight, _), h in zip(reversed(self.layers[:-1]), reversed(activations)):
            delta = (delta * (1.0 - h * h)) @ transpose(weight)
        return delta
