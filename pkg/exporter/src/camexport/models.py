"""Model registry and target-layer lookup.

Identifiers:
    "toy"                    a small deterministic 2-layer CNN (tests, demos)
    "torchvision:<name>"     any torchvision classification model; random
                             weights unless a state-dict path is supplied
"""

from __future__ import annotations

import torch
from torch import nn


class ConfigurationError(Exception):
    """Bad export configuration (unknown model or layer)."""


class ToyNet(nn.Module):
    """conv(3->4) -> ReLU -> conv(4->6) -> ReLU -> GAP -> fc(6->2)."""

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.conv1 = nn.Conv2d(3, 4, 3, padding=1)
        self.relu1 = nn.ReLU()
        self.conv2 = nn.Conv2d(4, 6, 3, padding=1)
        self.relu2 = nn.ReLU()
        self.head = nn.Linear(6, 2)

    def forward(self, x):
        x = self.relu1(self.conv1(x))
        x = self.relu2(self.conv2(x))
        feats = x.mean(dim=(2, 3))
        return self.head(feats)


def load_model(identifier: str, weights_path=None) -> nn.Module:
    if identifier == "toy":
        model = ToyNet()
    elif identifier.startswith("torchvision:"):
        name = identifier.split(":", 1)[1]
        try:
            from torchvision import models as tv_models
        except ImportError as exc:
            raise ConfigurationError(
                "torchvision is not installed; pip install camexport[torchvision]"
            ) from exc
        try:
            model = tv_models.get_model(name, weights=None)
        except ValueError as exc:
            raise ConfigurationError(f"unknown torchvision model {name!r}") from exc
    else:
        raise ConfigurationError(
            f"unknown model identifier {identifier!r}; use 'toy' or 'torchvision:<name>'"
        )
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def resolve_layer(model: nn.Module, layer_name: str) -> nn.Module:
    modules = dict(model.named_modules())
    if layer_name not in modules:
        known = [n for n in modules if n][:20]
        raise ConfigurationError(
            f"layer {layer_name!r} not found; first layers: {known}"
        )
    return modules[layer_name]
