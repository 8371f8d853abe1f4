import json

import pytest
import torch
from torch import nn


class SmallClassifier(nn.Module):
    """8 -> 16 -> 3 classifier; 'backbone' output is the penultimate representation."""

    def __init__(self):
        super().__init__()
        self.backbone = nn.Sequential(nn.Linear(8, 16), nn.ReLU())
        self.head = nn.Linear(16, 3)

    def forward(self, x):
        return self.head(self.backbone(x))


class SoftmaxHeadClassifier(nn.Module):
    """Applies softmax after the affine head: not exportable as-is."""

    def __init__(self):
        super().__init__()
        self.backbone = nn.Sequential(nn.Linear(8, 16), nn.ReLU())
        self.head = nn.Linear(16, 3)

    def forward(self, x):
        return torch.softmax(self.head(self.backbone(x)), dim=1)


class TwoStageClassifier(nn.Module):
    """Backbone with an intermediate width for shape-mismatch tests."""

    def __init__(self):
        super().__init__()
        self.stage1 = nn.Sequential(nn.Linear(8, 12), nn.ReLU())
        self.stage2 = nn.Sequential(nn.Linear(12, 16), nn.ReLU())
        self.head = nn.Linear(16, 3)

    def forward(self, x):
        return self.head(self.stage2(self.stage1(x)))


def make_dataset(n_per_class=40, seed=0):
    """Five original classes: 0, 1, 2 become ID; 3, 4 become OOD."""
    gen = torch.Generator().manual_seed(seed)
    inputs, labels = [], []
    for orig in range(5):
        center = torch.randn(8, generator=gen) * 3
        inputs.append(center + torch.randn(n_per_class, 8, generator=gen))
        labels.append(torch.full((n_per_class,), orig, dtype=torch.long))
    return {
        "inputs": torch.cat(inputs).float(),
        "labels": torch.cat(labels),
    }


@pytest.fixture(scope="session")
def export_workspace(tmp_path_factory):
    """Checkpoint + dataset + spec on disk, ready to export."""
    root = tmp_path_factory.mktemp("export")
    torch.manual_seed(0)
    model = SmallClassifier().eval()
    torch.save(model, root / "model.pt")
    torch.save(make_dataset(), root / "data.pt")
    spec = {
        "checkpoint": str(root / "model.pt"),
        "layer": "backbone",
        "dataset": str(root / "data.pt"),
        "out_dir": str(root / "bundles"),
        "id_classes": [0, 1, 2],
        "ood_classes": [3, 4],
        "train_fraction": 0.8,
        "batch_size": 16,
    }
    (root / "spec.json").write_text(json.dumps(spec, indent=2))
    return root
