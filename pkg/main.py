"""
FNSLab - Fractional Navier-Stokes Convergence Laboratory
Mild solutions of fractional NS/MHD on a periodic box and their alpha -> 2 convergence rates

Usage: python main.py <subcommand> [options]
"""
import sys

from cli.app import run_app


if __name__ == "__main__":
    sys.exit(run_app())
