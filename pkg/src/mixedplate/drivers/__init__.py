"""Benchmark problems, convergence studies and the command line interface."""
