"""Tap tables for supported torchvision models.

Tensor names are feature-extraction graph node names; tap order follows
the layer numbering used in the probing reports. Models whose traced
graphs need ops outside the exported subset (attention, windowing) are
not listed and are rejected with an explanation.
"""

_RESNET50_TAPS = (
    ("layer1.2.relu_2", "layer1"),
    ("layer2.3.relu_2", "layer2"),
    ("layer3.5.relu_2", "layer3"),
    ("layer4.2.relu_2", "layer4"),
    ("flatten", "flatten"),
)

_RESNET18_TAPS = (
    ("layer1.1.relu_1", "layer1"),
    ("layer2.1.relu_1", "layer2"),
    ("layer3.1.relu_1", "layer3"),
    ("layer4.0.relu_1", "layer4"),
    ("flatten", "flatten"),
)

_RESNEXT50_TAPS = (
    ("layer1.0.add", "layer1"),
    ("layer2.0.add", "layer2"),
    ("layer3.0.add", "layer3"),
    ("layer4.0.add", "layer4"),
    ("flatten", "flatten"),
)

_ALEXNET_TAPS = (
    ("features.1", "features.1"),
    ("features.4", "features.4"),
    ("features.7", "features.7"),
    ("features.9", "features.9"),
    ("features.11", "features.11"),
    ("classifier.2", "classifier.2"),
    ("classifier.5", "classifier.5"),
    ("flatten", "flatten"),
)

ZOO_SPECS = {
    "resnet50": {"taps": _RESNET50_TAPS, "input_size": 224},
    "resnet18": {"taps": _RESNET18_TAPS, "input_size": 224},
    "resnext50_32x4d": {"taps": _RESNEXT50_TAPS, "input_size": 224},
    "alexnet": {"taps": _ALEXNET_TAPS, "input_size": 224},
}

UNSUPPORTED_NOTE = (
    "transformer-family models (ViT, Swin) trace to ops outside the exported "
    "subset and are not supported; supply a CNN or a custom module"
)
