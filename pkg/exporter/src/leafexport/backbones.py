"""Backbone construction and penultimate-layer feature heads.

Three feature sources are supported, each truncated before its final
classification layers:

- ``darknet53-gap``: a from-scratch Darknet-53 (conv + batch norm +
  LeakyReLU(0.1) units, residual stages of 1/2/8/8/4 blocks), read at
  the global-average-pool output: 1024 values.
- ``alexnet-fc7``: torchvision AlexNet read at the second 4096-wide
  fully connected layer, before its ReLU.
- ``vgg19-fc7``: torchvision VGG-19, same cut: 4096 values.

Dropout layers are inert because inference always runs in eval mode.
"""

from dataclasses import dataclass

import torch
from torch import nn
from torchvision import models


class SetupError(RuntimeError):
    """Weights unavailable or a backbone could not be constructed."""


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    input_size: int
    output_dim: int


SPECS = {
    "darknet53-gap": BackboneSpec("darknet53-gap", 256, 1024),
    "alexnet-fc7": BackboneSpec("alexnet-fc7", 227, 4096),
    "vgg19-fc7": BackboneSpec("vgg19-fc7", 224, 4096),
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ConvUnit(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1):
        super().__init__()
        self.conv = nn.Conv2d(
            in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, bias=False
        )
        self.norm = nn.BatchNorm2d(out_ch)
        self.act = nn.LeakyReLU(0.1, inplace=True)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        half = channels // 2
        self.reduce = ConvUnit(channels, half, 1)
        self.expand = ConvUnit(half, channels, 3)

    def forward(self, x):
        return x + self.expand(self.reduce(x))


class Darknet53(nn.Module):
    STAGES = ((64, 1), (128, 2), (256, 8), (512, 8), (1024, 4))

    def __init__(self):
        super().__init__()
        layers = [ConvUnit(3, 32, 3)]
        channels = 32
        for out_ch, blocks in self.STAGES:
            layers.append(ConvUnit(channels, out_ch, 3, stride=2))
            layers.extend(ResidualBlock(out_ch) for _ in range(blocks))
            channels = out_ch
        self.body = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x):
        return torch.flatten(self.pool(self.body(x)), 1)


def _classifier_prefix(model, cutoff):
    def features(x):
        x = model.features(x)
        x = model.avgpool(x)
        x = torch.flatten(x, 1)
        for layer in model.classifier[:cutoff]:
            x = layer(x)
        return x

    return features


def build(name, weights="pretrained", weights_file=None):
    """Returns (module, feature_fn) for a backbone, in eval mode.

    ``weights='random'`` keeps the default initialization (seed it with
    torch.manual_seed beforehand for reproducible exports);
    ``'pretrained'`` loads torchvision weights for AlexNet/VGG-19 and
    needs ``weights_file`` (a state dict) for Darknet-53, which has no
    torchvision distribution.
    """
    if name not in SPECS:
        raise SetupError(f"unknown backbone {name!r}, pick from {sorted(SPECS)}")
    if weights not in ("pretrained", "random"):
        raise SetupError("weights must be 'pretrained' or 'random'")
    pretrained = weights == "pretrained"
    try:
        if name == "darknet53-gap":
            model = Darknet53()
            if pretrained:
                if not weights_file:
                    raise SetupError(
                        "darknet53-gap has no published torchvision weights; "
                        "pass --weights-file or use --weights random"
                    )
                state = torch.load(weights_file, map_location="cpu")
                model.load_state_dict(state)
            feature_fn = model
        elif name == "alexnet-fc7":
            model = models.alexnet(
                weights=models.AlexNet_Weights.IMAGENET1K_V1 if pretrained else None
            )
            # classifier[4] is the second 4096-wide linear layer
            feature_fn = _classifier_prefix(model, 5)
        else:
            model = models.vgg19(
                weights=models.VGG19_Weights.IMAGENET1K_V1 if pretrained else None
            )
            # classifier[3] is the second 4096-wide linear layer
            feature_fn = _classifier_prefix(model, 4)
    except SetupError:
        raise
    except Exception as exc:  # download failure, bad weights file, ...
        raise SetupError(f"could not set up {name}: {exc}") from exc
    model.eval()
    return model, feature_fn
