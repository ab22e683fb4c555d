import json
from pathlib import Path

import pytest

DATA = Path(__file__).resolve().parent.parent / "src" / "edgemesh" / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def load_json(name):
    return json.loads((DATA / name).read_text())
