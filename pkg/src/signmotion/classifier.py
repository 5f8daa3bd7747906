"""Skeleton action classifier: spatio-temporal graph convolutions over joints.

Used both as the recognition-accuracy metric and as the feature extractor for
the distribution metrics (its penultimate layer is the motion feature vector).
Motions are converted to sixd channels and uniformly resampled to a fixed
temporal extent before classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigError, ShapeError
from .motion import JointLayout, Motion, convert_channels, resample


@dataclass(frozen=True)
class SkeletonGraph:
    """Kinematic-tree graph of a joint layout: nodes, edges, adjacency."""

    layout: JointLayout
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_layout(cls, layout: JointLayout) -> "SkeletonGraph":
        edges = tuple((i, p) for i, p in enumerate(layout.parent_index) if p >= 0)
        return cls(layout=layout, edges=edges)

    @property
    def n_nodes(self) -> int:
        return self.layout.joint_count

    def adjacency(self) -> np.ndarray:
        """Symmetrically normalized adjacency with self-loops: D^-1/2 (A+I) D^-1/2."""
        v = self.n_nodes
        a = np.eye(v)
        for child, parent in self.edges:
            a[child, parent] = 1.0
            a[parent, child] = 1.0
        deg = a.sum(axis=1)
        d_inv_sqrt = 1.0 / np.sqrt(deg)
        return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


@dataclass
class ClassifierConfig:
    hidden: int = 32
    n_blocks: int = 3
    temporal_kernel: int = 9
    n_frames: int = 60
    epochs: int = 150
    learning_rate: float = 1e-3
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if self.temporal_kernel % 2 != 1:
            raise ConfigError("temporal_kernel must be odd")


class _Block(nn.Module):
    """One ST-GCN unit: 1x1 spatial conv mixed through A, then temporal conv."""

    def __init__(self, c_in: int, c_out: int, t_kernel: int, stride: int = 1):
        super().__init__()
        self.spatial = nn.Conv2d(c_in, c_out, kernel_size=1)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.temporal = nn.Conv2d(
            c_out, c_out, kernel_size=(t_kernel, 1), padding=(t_kernel // 2, 0), stride=(stride, 1)
        )
        self.bn2 = nn.BatchNorm2d(c_out)
        if c_in != c_out or stride != 1:
            self.residual = nn.Sequential(
                nn.Conv2d(c_in, c_out, kernel_size=1, stride=(stride, 1)), nn.BatchNorm2d(c_out)
            )
        else:
            self.residual = nn.Identity()

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        res = self.residual(x)
        x = self.spatial(x)
        x = torch.einsum("nctv,vw->nctw", x, adj)
        x = F.relu(self.bn1(x))
        x = self.bn2(self.temporal(x))
        return F.relu(x + res)


class StgcnNetwork(nn.Module):
    """Stacked graph-conv blocks + global pooling + linear classification head."""

    def __init__(self, graph: SkeletonGraph, n_classes: int, config: ClassifierConfig):
        super().__init__()
        self.register_buffer("adj", torch.from_numpy(graph.adjacency()).float())
        widths = [config.hidden] * (config.n_blocks - 1) + [2 * config.hidden]
        blocks = []
        c_in = 6
        for i, c_out in enumerate(widths):
            stride = 2 if i == len(widths) - 1 and config.n_blocks > 1 else 1
            blocks.append(_Block(c_in, c_out, config.temporal_kernel, stride))
            c_in = c_out
        self.blocks = nn.ModuleList(blocks)
        self.feature_dim = c_in
        self.fc = nn.Linear(c_in, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x, self.adj)
        return x.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.features(x))


@dataclass
class TrainedClassifier:
    """A trained network plus the vocabulary and preprocessing it expects."""

    network: StgcnNetwork
    graph: SkeletonGraph
    class_words: list[str]
    n_frames: int
    config: ClassifierConfig = field(default_factory=ClassifierConfig)

    def to_tensor(self, motions: list[Motion]) -> torch.Tensor:
        """Preprocess motions into the (N, 6, T, V) network input."""
        expected = self.graph.layout.joints
        arrays = []
        for m in motions:
            if m.layout.joints != expected:
                raise ShapeError(
                    f"motion layout {m.layout.name!r} does not match classifier layout "
                    f"{self.graph.layout.name!r}"
                )
            m = convert_channels(m, "sixd")
            m = resample(m, self.n_frames)
            x = m.joint_rotations()  # (T, V, 6)
            arrays.append(np.transpose(x, (2, 0, 1)))
        return torch.from_numpy(np.stack(arrays)).float()

    def logits(self, motions: list[Motion]) -> np.ndarray:
        self.network.eval()
        with torch.no_grad():
            return self.network(self.to_tensor(motions)).double().numpy()

    def features(self, motions: list[Motion]) -> np.ndarray:
        """Penultimate-layer motion feature vectors, shape (N, feature_dim)."""
        self.network.eval()
        with torch.no_grad():
            return self.network.features(self.to_tensor(motions)).double().numpy()

    def predict(self, motions: list[Motion]) -> list[str]:
        idx = np.argmax(self.logits(motions), axis=1)
        return [self.class_words[i] for i in idx]


def train_classifier(
    motions: list[Motion],
    labels: list[str],
    seed: int = 0,
    config: ClassifierConfig | None = None,
) -> TrainedClassifier:
    """Fit the recognition classifier on raw motions; deterministic per seed."""
    config = config or ClassifierConfig()
    if len(motions) != len(labels):
        raise ShapeError(f"{len(motions)} motions vs {len(labels)} labels")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ConfigError(f"need at least 2 word classes, got {len(classes)}")
    counts = {c: labels.count(c) for c in classes}
    thin = [c for c, k in counts.items() if k < 2]
    if thin:
        raise ConfigError(f"need at least 2 samples per word; too few for {thin}")

    graph = SkeletonGraph.from_layout(motions[0].layout.with_channels("sixd"))
    torch.manual_seed(seed)
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        network = StgcnNetwork(graph, len(classes), config)
        clf = TrainedClassifier(
            network=network, graph=graph, class_words=classes, n_frames=config.n_frames, config=config
        )
        x = clf.to_tensor(motions)
        y = torch.tensor([classes.index(l) for l in labels], dtype=torch.long)

        optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
        rng = np.random.default_rng([seed, 17])
        network.train()
        for _ in range(config.epochs):
            perm = rng.permutation(len(motions))
            for start in range(0, len(motions), config.batch_size):
                idx = perm[start : start + config.batch_size]
                optimizer.zero_grad()
                out = network(x[idx])
                loss = F.cross_entropy(out, y[idx])
                loss.backward()
                optimizer.step()
        network.eval()
        return clf
    finally:
        torch.set_num_threads(n_threads)


def accuracy(classifier: TrainedClassifier, motions: list[Motion], labels: list[str]) -> float:
    """Fraction of argmax predictions matching the labels.

    Logit ties resolve to the lowest class index (argmax keeps the first max).
    """
    if len(motions) != len(labels):
        raise ShapeError(f"{len(motions)} motions vs {len(labels)} labels")
    preds = classifier.predict(motions)
    return sum(p == l for p, l in zip(preds, labels)) / len(labels)
