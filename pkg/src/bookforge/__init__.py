"""bookforge: turn raw story text into a downloadable 3D-book bundle."""

__version__ = "0.1.0"
