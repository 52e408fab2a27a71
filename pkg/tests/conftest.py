"""Shared fixtures: one prebuilt table per catalog family, built once."""

import pytest

from torusopt import BuildConfig, build_table, get_catalog_problem
from torusopt.problems import catalog_names


@pytest.fixture(scope="session")
def default_tables():
    """Tables for every catalog problem at the default build configuration."""
    return {
        name: build_table(get_catalog_problem(name), BuildConfig())
        for name in catalog_names()
    }
