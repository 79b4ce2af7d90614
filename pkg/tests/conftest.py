"""Shared dataset fixtures: small synthetic road networks written once per session."""

import dataclasses
from pathlib import Path

import pytest

from conformal_load.synthetic import Profile, generate_dataset

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory) -> Path:
    """60 junctions / 150 segments: fast enough for smoke tests."""
    out = tmp_path_factory.mktemp("data") / "mini"
    prof = Profile(name="mini", n_nodes=60, n_edges=150,
                   n_ghost_nodes=2, n_zero_links=10, seed=5)
    generate_dataset(prof, out)
    return out


@pytest.fixture(scope="session")
def medium_dataset(tmp_path_factory) -> Path:
    """200 junctions / 520 segments: big enough for coverage statistics."""
    out = tmp_path_factory.mktemp("data") / "medium"
    prof = Profile(name="medium", n_nodes=200, n_edges=520,
                   n_ghost_nodes=2, n_zero_links=12, seed=9)
    generate_dataset(prof, out)
    return out
