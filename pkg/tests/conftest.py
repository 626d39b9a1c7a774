"""Shared lattices and store fixtures."""

from fractions import Fraction

import pytest

from src import database as db
from src.lattice import LatticeSpec


@pytest.fixture
def single_site():
    return LatticeSpec.uniform(1, 1)


@pytest.fixture
def two_site():
    return LatticeSpec.uniform(1, 2)


@pytest.fixture
def three_site():
    return LatticeSpec.uniform(1, 3)


@pytest.fixture
def numeric_two_site():
    return LatticeSpec.numeric(1, 2, k=1, lam=Fraction(1, 2), w=Fraction(1, 4))


@pytest.fixture
def numeric_three_site():
    return LatticeSpec.numeric(1, 3, k=1, lam=Fraction(1, 2), w=Fraction(1, 4))


@pytest.fixture
def store(tmp_path):
    """A fresh sqlite store for the duration of one test."""
    previous = db.DB_PATH
    db.set_db_path(str(tmp_path / 'ldslab-test.db'))
    db.init_database()
    yield db
    db.set_db_path(previous)


@pytest.fixture
def no_store():
    previous = db.DB_PATH
    db.set_db_path('')
    yield
    db.set_db_path(previous)
