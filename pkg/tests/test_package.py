"""Package-level surface: exports and version metadata."""
from importlib.metadata import version

import mimfrac


def test_public_names_resolve():
    missing = [name for name in mimfrac.__all__ if not hasattr(mimfrac, name)]
    assert missing == []
    assert mimfrac.__all__ == sorted(mimfrac.__all__)


def test_version_matches_metadata():
    assert mimfrac.__version__ == version("mimfrac")
