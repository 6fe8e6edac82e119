"""Bundled example data."""

from __future__ import annotations

from importlib import resources

from .cohort import Cohort, read_cohort_csv

__all__ = ["hypothetical_cohort", "hypothetical_paths"]


def hypothetical_paths() -> tuple[str, str]:
    """Filesystem paths of the bundled four-subject cohort CSV pair."""
    root = resources.files("trunclong").joinpath("data", "hypothetical")
    return str(root / "subjects.csv"), str(root / "observations.csv")


def hypothetical_cohort() -> Cohort:
    """Four-subject demonstration cohort.

    Two survivors followed for five years (one flat at 90 points, one
    declining 84 to 74) and two decedents observed for three years before
    dying in year three (84/80/76 and 65/50/35).  Response scale 0-100.
    """
    subjects, observations = hypothetical_paths()
    return read_cohort_csv(subjects, observations, response_bounds=(0.0, 100.0))
