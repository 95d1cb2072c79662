from enum import IntEnum


class SemanticClass(IntEnum):
    """Ordered semantic set; ids are dense from 0."""

    FRUIT = 0
    LEAF = 1
    BACKGROUND = 2


NUM_CLASSES = len(SemanticClass)
TARGET_CLASS = int(SemanticClass.FRUIT)
