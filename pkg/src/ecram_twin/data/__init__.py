"""Bundled example configurations."""

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent


def bundled(name: str) -> Path:
    """Path of a bundled config by stem, e.g. ``bundled("geometry_a")``."""
    path = DATA_DIR / f"{name}.yaml"
    if not path.exists():
        choices = sorted(p.stem for p in DATA_DIR.glob("*.yaml"))
        raise FileNotFoundError(f"no bundled config '{name}'; available: {', '.join(choices)}")
    return path
