"""Models shipped with the package."""

from __future__ import annotations

from importlib import resources

from .dataio import parse_model
from .model import PopulationModel

STANDIN_N = 10


def standin_model() -> PopulationModel:
    """Synthetic two-group model used by the examples and tests.

    Pool size 10, Pr{A=0} = 0.1, Pr{Y=1|A=0} = 0.3, Pr{Y=1|A=1} = 0.4 on the
    support {0, 0.1, ..., 1}.  Qualified members of group 0 have the lower
    mean score (0.683 against 0.700) but a heavy top level, so argmax
    selection favors group 0 for m = 1, 2, 3 and group 1 for m = 4.  The
    perfect-fairness conditions therefore hold for m <= 3 and fail for m = 4.
    """
    text = resources.files(__package__).joinpath("data/standin.json").read_text("utf-8")
    return parse_model(text)
