"""Bundled real-world data.

Only Iris ships with the package (150 rows, 4 features, 3 species). The
Seeds set has to be supplied as a CSV; see the README for the layout.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .clustering import DataSet
from .harness import ingest_csv


def iris_path() -> Path:
    return Path(str(resources.files("bicenum") / "data" / "iris.csv"))


def load_iris(normalize: str = "mean") -> DataSet:
    """Iris with species labels; by default each feature divided by its mean."""
    return ingest_csv(iris_path(), has_labels=True, normalize=normalize)
