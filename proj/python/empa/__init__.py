"""EMPA-8 many-processor simulator."""

from ._empa import (
    EmpaError,
    assemble,
    bench,
    cli,
    disassemble,
    efficiency,
    fit_trend,
    generate,
    imperfectness,
    kernels,
    record_beta,
    run,
)

__all__ = [
    "EmpaError",
    "assemble",
    "bench",
    "cli",
    "disassemble",
    "efficiency",
    "fit_trend",
    "generate",
    "imperfectness",
    "kernels",
    "record_beta",
    "run",
]
