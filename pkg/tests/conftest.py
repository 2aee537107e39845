import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ocumesh.template import build_template


@pytest.fixture(scope="session")
def left_template():
    return build_template(side="left")


@pytest.fixture(scope="session")
def right_template():
    return build_template(side="right")


@pytest.fixture(scope="session")
def templates(left_template, right_template):
    return {"left": left_template, "right": right_template}
