"""Allow running the package with `python -m dyadic`."""

from dyadic.cli import app

if __name__ == "__main__":
    app()
