import pytest

from tabsynth import tables


@pytest.fixture
def people_table():
    return tables.from_rows(
        ["Occupation", "Gender", "Age"],
        [
            ["doctor", "female", "34"],
            ["teacher", "male", "51"],
            ["doctor", "male", "18"],
            ["nurse", "female", "46"],
        ],
    )
