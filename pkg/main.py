"""Entry point: python main.py <experiment> [flags]."""

from noisestab.cli import main

if __name__ == "__main__":
    main()
