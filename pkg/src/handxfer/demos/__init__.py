"""Demonstration data: types, file formats, perception ingestion and synthesis."""
from .fileio import load_dataset, load_trajectory, save_dataset, save_trajectory
from .model import Dataset, FrameOfReference, Source, Trajectory
from .synth import synth_generate

__all__ = [
    "Dataset", "FrameOfReference", "Source", "Trajectory",
    "load_dataset", "load_trajectory", "save_dataset", "save_trajectory", "synth_generate",
]
