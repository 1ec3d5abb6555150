import json
import math

import numpy as np
import pytest

import promptloop as pl


def test_script_round_trip():
    clips = pl.parse_script("1: a trilobite glides; 49: it burrows")
    assert clips == [(1, "a trilobite glides"), (49, "it burrows")]
    assert pl.serialize_script(clips) == "1: a trilobite glides; 49: it burrows"
    assert pl.clip_frame_ranges("1: a; 49: b", 96) == [(1, 48), (49, 96)]
    with pytest.raises(ValueError, match="non-increasing start_frame at entry 2"):
        pl.parse_script("1: a; 1: b")
    with pytest.raises(pl.DataError):
        pl.serialize_script([(2, "x")])


def test_pnm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    gray = rng.integers(0, 256, size=(7, 5), dtype=np.uint8)
    rgb = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
    pl.write_pnm(tmp_path / "g.pgm", gray)
    pl.write_pnm(tmp_path / "c.ppm", rgb)
    assert np.array_equal(pl.read_pnm(tmp_path / "g.pgm"), gray)
    assert np.array_equal(pl.read_pnm(tmp_path / "c.ppm"), rgb)


def test_smoothness():
    flat = [np.full((32, 32), 90, dtype=np.uint8)] * 5
    assert pl.fid_curve(flat) == [0.0] * 4
    assert pl.smoothness_reward(flat) == 0.0
    frames = pl.render("1: glides plain abruptly", total_frames=12, seed=2)
    curve = pl.fid_curve(frames)
    assert len(curve) == 11
    assert math.isclose(pl.smoothness_reward(frames), -sum(curve), rel_tol=1e-12)


def test_realism(tmp_path):
    paths = pl.build_corpus(tmp_path / "refs", 3, 7)
    assert [p.name for p in paths] == ["ref_0001.pgm", "ref_0002.pgm", "ref_0003.pgm"]
    corpus = pl.ReferenceCorpus.from_dir(tmp_path / "refs")
    assert len(corpus) == 3
    assert corpus.ids == ["ref_0001", "ref_0002", "ref_0003"]
    ref = pl.read_pnm(paths[1])
    assert pl.frame_distance(ref, ref) == 0.0
    report = pl.realism_reward([ref, np.zeros_like(ref)], corpus)
    assert report["reward"] == -1.0
    assert report["worst_frame_index"] == 1
    assert report["argmin_reference_id"][0] == "ref_0002"
    assert pl.realism_reward([ref], corpus)["reward"] == 0.0


def test_hamming():
    assert pl.hamming([0, 0, 0, 0], [0, 0, 0, 0]) == 0
    assert pl.hamming([0, 0, 0, 0], [2**64 - 1] * 4) == 256
    assert pl.hamming([5, 0, 0, 0], [3, 0, 0, 0]) == 2


def test_kto_step_and_loop(tmp_path):
    pl.build_corpus(tmp_path / "refs", 4, 7)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"corpus_dir": "refs", "iterations": 2, "frames_per_clip": 6,
                               "samples_per_context": 2, "seed": 3}))
    text = pl.run_loop(cfg, tmp_path / "out")
    assert len(json.loads(text)["iterations"]) == 2
    assert (tmp_path / "out" / "manifest.json").read_text() == text
    assert pl.run_loop(cfg) == text

    policy = (tmp_path / "out" / "policy_initial.txt").read_text()
    updated, before, after = pl.kto_step(policy, [("reef", [1, 1, 0], True), ("reef", [2, 3, 1], False)])
    assert abs(before - 0.5) < 1e-12
    assert after < before
    assert updated != policy
