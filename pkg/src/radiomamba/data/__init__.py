"""Dataset types, synthetic generation, on-disk I/O and batching."""

from .batcher import DIHEDRAL, Batcher, augment, dihedral, input_channels, stack
from .io import (
    SPLITS,
    iter_samples,
    load_dataset,
    parse_key_values,
    read_f32grid,
    read_manifest,
    read_png,
    save_map,
    to_gray,
    write_f32grid,
    write_manifest,
    write_png,
)
from .sample import MODES, DataError, EnvironmentSample, normalize_mode
from .synth import KAPPA, G_SCALE, MIN_GRID, free_space_gain, pathloss_oracle, synth_generate

__all__ = [
    "Batcher", "DIHEDRAL", "DataError", "EnvironmentSample", "G_SCALE", "KAPPA", "MIN_GRID", "MODES", "SPLITS",
    "augment", "dihedral", "free_space_gain", "input_channels", "iter_samples", "load_dataset", "normalize_mode",
    "parse_key_values", "pathloss_oracle", "read_f32grid", "read_manifest", "read_png", "save_map",
    "stack", "synth_generate", "to_gray", "write_f32grid", "write_manifest", "write_png",
]
