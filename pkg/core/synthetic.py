from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from .coding_rate import normalize_columns
from .config import ExperimentConfig
from .linalg import Matrix

AMBIENT_DIM = 3


@dataclass(frozen=True)
class SyntheticDataset:
    points: Matrix
    labels: np.ndarray
    directions: Matrix

    def __post_init__(self):
        if self.points.shape[1] != self.labels.shape[0]:
            raise ValueError(f"{self.points.shape[1]} points but {self.labels.shape[0]} labels")

    @property
    def classes(self) -> int:
        return self.directions.shape[1]

    def class_points(self, label: int) -> Matrix:
        return self.points[:, self.labels == label]

    def by_class(self) -> Iterator[Tuple[int, Matrix]]:
        for label in range(self.classes):
            yield label, self.class_points(label)


def gen_synthetic(cfg: ExperimentConfig) -> SyntheticDataset:
    """
    Each class lies along a random line through the origin of R³: a standard
    normal coordinate along a random unit direction plus isotropic noise of
    std `noise_std`, then every point is scaled to unit norm. A class with a
    single sample carries no noise.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.samples_per_class
    blocks = []
    directions = []
    for _ in range(cfg.classes):
        direction = rng.standard_normal(AMBIENT_DIM)
        direction /= np.linalg.norm(direction)
        directions.append(direction)
        coords = rng.standard_normal(n)
        noise = rng.standard_normal((AMBIENT_DIM, n))
        sigma = cfg.noise_std if n > 1 else 0.0
        blocks.append(np.outer(direction, coords) + sigma * noise)

    labels = np.repeat(np.arange(cfg.classes), n)
    return SyntheticDataset(
        points=normalize_columns(np.hstack(blocks)),
        labels=labels,
        directions=np.column_stack(directions),
    )
