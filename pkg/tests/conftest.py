import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trunclong.datasets import hypothetical_cohort


@pytest.fixture()
def table_cohort():
    """The bundled four-subject cohort (two survivors, two decedents)."""
    return hypothetical_cohort()
