"""Reward scoring and preference optimisation for timestamped prompt scripts."""
from ._core import (
    DataError,
    ReferenceCorpus,
    build_corpus,
    clip_frame_ranges,
    fid_curve,
    frame_distance,
    hamming,
    kto_step,
    parse_script,
    read_frames,
    read_pnm,
    realism_reward,
    render,
    run_loop,
    serialize_script,
    smoothness_reward,
    write_frames,
    write_pnm,
)

__all__ = [
    "DataError",
    "ReferenceCorpus",
    "build_corpus",
    "clip_frame_ranges",
    "fid_curve",
    "frame_distance",
    "hamming",
    "kto_step",
    "parse_script",
    "read_frames",
    "read_pnm",
    "realism_reward",
    "render",
    "run_loop",
    "serialize_script",
    "smoothness_reward",
    "write_frames",
    "write_pnm",
]
