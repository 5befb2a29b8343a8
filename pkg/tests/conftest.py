from __future__ import annotations

import pytest

from weakpanoptic.labels import ClassDef, ClassTable


@pytest.fixture
def voc_like_table() -> ClassTable:
    """Single catch-all stuff class plus two thing classes."""
    return ClassTable(
        (
            ClassDef(0, "background", "stuff", (0, 0, 0)),
            ClassDef(1, "crate", "thing", (200, 60, 50)),
            ClassDef(2, "disc", "thing", (230, 200, 40)),
        )
    )


@pytest.fixture
def multi_stuff_table() -> ClassTable:
    """Two stuff classes and two thing classes."""
    return ClassTable(
        (
            ClassDef(0, "sky", "stuff", (60, 90, 200)),
            ClassDef(1, "grass", "stuff", (40, 160, 60)),
            ClassDef(2, "crate", "thing", (200, 60, 50)),
            ClassDef(3, "disc", "thing", (230, 200, 40)),
        )
    )


@pytest.fixture
def multi_kind_table() -> ClassTable:
    """Things at ids 1 and 2 with a second stuff class at id 4."""
    return ClassTable(
        (
            ClassDef(0, "background", "stuff", (0, 0, 0)),
            ClassDef(1, "crate", "thing", (200, 60, 50)),
            ClassDef(2, "disc", "thing", (230, 200, 40)),
            ClassDef(4, "water", "stuff", (30, 80, 180)),
        )
    )
