"""Shared torch building blocks: seeded MLPs and unit-ball projection"""

import math
from collections.abc import Iterable, Sequence

import torch
from torch import nn

DTYPE = torch.float64


def make_generator(seed: int) -> torch.Generator:
    """CPU generator seeded for one component; never touch the global torch RNG"""
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def init_uniform_(module: nn.Module, generator: torch.Generator) -> nn.Module:
    """Initialise every Linear layer uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)]"""
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, nn.Linear):
                bound = 1.0 / math.sqrt(layer.in_features)
                for param in (layer.weight, layer.bias):
                    param.copy_((torch.rand(param.shape, generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound)
    return module


def build_mlp(sizes: Sequence[int]) -> nn.Sequential:
    """Linear layers with tanh between them and an identity output"""
    if len(sizes) < 2:
        raise ValueError(f"an MLP needs at least input and output sizes, got {list(sizes)}")
    layers: list[nn.Module] = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(nn.Linear(fan_in, fan_out, dtype=DTYPE))
        if i < len(sizes) - 2:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


def unit_ball(t: torch.Tensor) -> torch.Tensor:
    """Rescale rows with norm above one onto the sphere (differentiable)"""
    norms = torch.linalg.vector_norm(t, dim=-1, keepdim=True)
    return t / torch.clamp(norms, min=1.0)


def to_tensor(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def parameter_vector(module: nn.Module) -> torch.Tensor:
    """Detached flat copy of all parameters"""
    return nn.utils.parameters_to_vector(module.parameters()).detach().clone()


def load_parameter_vector(module: nn.Module, vector) -> None:
    """Overwrite all parameters from a flat vector"""
    with torch.no_grad():
        nn.utils.vector_to_parameters(to_tensor(vector), module.parameters())


def make_optimizer(params: Iterable[torch.Tensor], kind: str, lr: float) -> torch.optim.Optimizer:
    """
    Optimizer over ``params``: ``adam`` (default) or plain ``sgd``.

    Raises:
        ValueError: On an unknown optimizer name
    """
    params = list(params)
    kind = getattr(kind, "value", kind)
    if kind == "adam":
        return torch.optim.Adam(params, lr=lr)
    if kind == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
