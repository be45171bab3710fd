#!/usr/bin/env python3
"""
CLI Entry Point
Run with: python main_cli.py factorize --input matrix.bmf --rank 5
"""

from app.cli.main import app

if __name__ == "__main__":
    app()
