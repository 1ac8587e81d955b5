"""Network architectures: target classifiers, the conditional generator,
the discriminator, and substitute classifiers.

Classifiers return logits of shape (N, num_classes) and carry `num_classes`,
`image_shape`, and `arch_id` attributes. The generator maps (z, y) to images
in [0, 1] and is deterministic in eval mode (GroupNorm, no dropout).
"""

from __future__ import annotations

import torch
import torch.nn as nn


class ShapeMismatch(ValueError):
    """Architecture cannot consume the dataset's image shape."""


def _tag(model: nn.Module, arch_id: str, image_shape, num_classes: int) -> nn.Module:
    model.arch_id = arch_id
    model.image_shape = tuple(image_shape)
    model.num_classes = num_classes
    return model


class SmallCNN(nn.Module):
    """Desk-scale 4-conv classifier; works on any shape >= 8x8."""

    def __init__(self, image_shape, num_classes, width=32):
        super().__init__()
        c, h, w = image_shape
        if h < 8 or w < 8:
            raise ShapeMismatch(f"small-cnn needs at least 8x8 input, got {h}x{w}")
        self.features = nn.Sequential(
            nn.Conv2d(c, width, 3, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 3, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * width, 2 * width, 3, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
        )
        self.head = nn.Linear(2 * width * (h // 4) * (w // 4), num_classes)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))


class _BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class ResNet20(nn.Module):
    """Classic 3-stage residual net for 3x32x32 inputs."""

    def __init__(self, image_shape, num_classes):
        super().__init__()
        c, h, w = image_shape
        if c != 3:
            raise ShapeMismatch(f"resnet20 expects 3 input channels, got {c}")
        self.stem = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1, bias=False), nn.BatchNorm2d(16), nn.ReLU(inplace=True)
        )
        layers = []
        in_ch = 16
        for out_ch, stride in ((16, 1), (32, 2), (64, 2)):
            for i in range(3):
                layers.append(_BasicBlock(in_ch, out_ch, stride if i == 0 else 1))
                in_ch = out_ch
        self.stages = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(64, num_classes)

    def forward(self, x):
        out = self.stages(self.stem(x))
        return self.head(self.pool(out).flatten(1))


_VGG_CFGS = {
    "vgg13": [64, 64, "M", 128, 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    "vgg16": [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"],
    "vgg19": [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M", 512, 512, 512, 512, "M", 512, 512, 512, 512, "M"],
}


class VGG(nn.Module):
    def __init__(self, cfg_name, image_shape, num_classes):
        super().__init__()
        c, h, w = image_shape
        if c != 3 or h < 32 or w < 32:
            raise ShapeMismatch(f"{cfg_name} expects 3x32x32 or larger input, got {image_shape}")
        layers, in_ch = [], c
        for v in _VGG_CFGS[cfg_name]:
            if v == "M":
                layers.append(nn.MaxPool2d(2))
            else:
                layers += [
                    nn.Conv2d(in_ch, v, 3, padding=1),
                    nn.BatchNorm2d(v),
                    nn.ReLU(inplace=True),
                ]
                in_ch = v
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(512, num_classes)

    def forward(self, x):
        return self.head(self.pool(self.features(x)).flatten(1))


class AlexNetSmall(nn.Module):
    """AlexNet-style stack sized for 32x32 inputs."""

    def __init__(self, image_shape, num_classes):
        super().__init__()
        c, h, w = image_shape
        if c != 3 or h < 32 or w < 32:
            raise ShapeMismatch(f"alexnet expects 3x32x32 or larger input, got {image_shape}")
        self.features = nn.Sequential(
            nn.Conv2d(c, 64, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(64, 192, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(192, 384, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(384, 256, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(2),
        )
        self.head = nn.Sequential(
            nn.Linear(256 * 4, 512), nn.ReLU(inplace=True), nn.Linear(512, num_classes)
        )

    def forward(self, x):
        return self.head(self.features(x).flatten(1))


def _torchvision_resnet(depth, image_shape, num_classes):
    from torchvision.models import resnet18, resnet50

    c, h, w = image_shape
    if c != 3:
        raise ShapeMismatch(f"resnet{depth} expects 3 input channels, got {c}")
    net = {18: resnet18, 50: resnet50}[depth](num_classes=num_classes)
    # small-image stem: 3x3 stride-1 conv, no initial downsampling pool
    net.conv1 = nn.Conv2d(3, 64, 3, stride=1, padding=1, bias=False)
    net.maxpool = nn.Identity()
    return net


CLASSIFIER_ARCHS = (
    "small-cnn",
    "resnet20",
    "resnet18",
    "resnet50",
    "vgg13",
    "vgg16",
    "vgg19",
    "alexnet",
)


def build_classifier(arch: str, image_shape, num_classes: int) -> nn.Module:
    """Instantiate a classifier by architecture id."""
    if arch == "small-cnn":
        model = SmallCNN(image_shape, num_classes)
    elif arch == "resnet20":
        model = ResNet20(image_shape, num_classes)
    elif arch in ("resnet18", "resnet50"):
        model = _torchvision_resnet(int(arch[6:]), image_shape, num_classes)
    elif arch in _VGG_CFGS:
        model = VGG(arch, image_shape, num_classes)
    elif arch == "alexnet":
        model = AlexNetSmall(image_shape, num_classes)
    else:
        raise ValueError(f"unknown architecture {arch!r}; known: {CLASSIFIER_ARCHS}")
    return _tag(model, arch, image_shape, num_classes)


def default_substitute_arch(dataset: str) -> str:
    return {"cifar10": "vgg13", "cifar100": "resnet18"}.get(dataset, "small-cnn")


def _gn(ch):
    return nn.GroupNorm(min(8, ch), ch)


class _FiLMBlock(nn.Module):
    """Conv block whose features are scaled and shifted per class, so the
    label steers every stage of generation rather than only the input."""

    def __init__(self, in_ch, out_ch, num_classes, upsample):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm = _gn(out_ch)
        self.gain = nn.Embedding(num_classes, out_ch)
        self.bias = nn.Embedding(num_classes, out_ch)
        nn.init.ones_(self.gain.weight)
        nn.init.zeros_(self.bias.weight)

    def forward(self, h, y):
        if self.upsample:
            h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
        h = self.norm(self.conv(h))
        gain = self.gain(y).unsqueeze(-1).unsqueeze(-1)
        bias = self.bias(y).unsqueeze(-1).unsqueeze(-1)
        return torch.relu(gain * h + bias)


class ConditionalGenerator(nn.Module):
    """Maps (noise z, class label y) to an image in [0, 1]^(C, H, W).

    The label enters twice: as an embedding joined to z, and as per-block
    feature gains/biases, which keeps class identity intact even for latents
    far outside the prior's typical set (where inversion tends to land).
    Output is squashed by a sigmoid; eval-mode forward is a pure function of
    (z, y). H and W must be divisible by 4.
    """

    def __init__(self, latent_dim, num_classes, image_shape, width=64):
        super().__init__()
        c, h, w = image_shape
        if h % 4 or w % 4:
            raise ShapeMismatch(f"generator needs H, W divisible by 4, got {h}x{w}")
        self.latent_dim = latent_dim
        self.num_classes = num_classes
        self.image_shape = tuple(image_shape)
        self.h0, self.w0 = h // 4, w // 4
        self.width = width
        self.embed = nn.Embedding(num_classes, latent_dim)
        self.fc = nn.Linear(2 * latent_dim, 2 * width * self.h0 * self.w0)
        self.blocks = nn.ModuleList(
            [
                _FiLMBlock(2 * width, width, num_classes, upsample=True),
                _FiLMBlock(width, width, num_classes, upsample=True),
            ]
        )
        self.to_image = nn.Sequential(nn.Conv2d(width, c, 3, padding=1), nn.Sigmoid())

    def forward(self, z, y):
        if z.shape[0] != y.shape[0]:
            raise ValueError("z and y batch sizes differ")
        code = torch.cat([z, self.embed(y)], dim=1)
        h = self.fc(code).view(-1, 2 * self.width, self.h0, self.w0)
        for block in self.blocks:
            h = block(h, y)
        return self.to_image(h)


class Discriminator(nn.Module):
    """Realness critic: image -> probability in (0, 1)."""

    def __init__(self, image_shape, width=32):
        super().__init__()
        c, h, w = image_shape
        self.features = nn.Sequential(
            nn.Conv2d(c, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            _gn(2 * width),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.head = nn.Linear(2 * width * ((h + 3) // 4) * ((w + 3) // 4), 1)

    def forward(self, x):
        logit = self.head(self.features(x).flatten(1)).squeeze(1)
        return torch.sigmoid(logit)


def init_gan_weights(module: nn.Module) -> None:
    """DCGAN-style normal(0, 0.02) init for conv and linear layers."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
