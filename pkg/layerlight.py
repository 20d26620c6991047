"""
layerlight - layered score distillation for relighting

Usage:
    python layerlight.py <command> [options]
    python layerlight.py --help
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
