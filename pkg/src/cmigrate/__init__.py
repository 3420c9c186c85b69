"""Dependency-guided translation of C repositories into safe Rust crates."""

__version__ = "0.1.0"
