"""Checkpoint persistence: round-trips, resume equivalence, corruption."""

import numpy as np
import pytest

from tslatent.checkpoint import (FORMAT_VERSION, load_checkpoint,
                                 restore_components, restore_rng,
                                 save_checkpoint)
from tslatent.errors import CheckpointFormatError
from tslatent.nets import Encoder, GenerationHead, RecurrentDecoder
from tslatent.series import TimeSeries
from tslatent.training import Adam, BaselineConfig, train_autoencoder_baseline
from tslatent.nets import VariationalHead


def _components(rng):
    return {
        "encoder": Encoder(2, 3, 4, rng),
        "decoder": RecurrentDecoder(2, 3, 4, 5, rng),
        "gen_head": GenerationHead(5, 2, rng),
    }


def test_roundtrip_bit_for_bit(tmp_path, rng):
    comps = _components(rng)
    path = tmp_path / "ck.npz"
    rng_state_before = rng.bit_generator.state
    save_checkpoint(path, {"latent_dim": 3}, comps, step=7, rng=rng)
    originals = {name: [p.value.copy() for p in c.params()]
                 for name, c in comps.items()}

    config, arrays, step, rng_state = load_checkpoint(path)
    assert config == {"latent_dim": 3} and step == 7
    fresh = _components(np.random.default_rng(999))
    restore_components(arrays, fresh)
    for name, c in fresh.items():
        for p, orig in zip(c.params(), originals[name]):
            np.testing.assert_array_equal(p.value, orig)
    restored = restore_rng(rng_state)
    assert restored.bit_generator.state == rng_state_before


def test_rng_restore_continues_stream(tmp_path, rng):
    comps = _components(rng)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, {}, comps, rng=rng)
    expected = rng.standard_normal(4)  # draws after the save point
    _, _, _, rng_state = load_checkpoint(path)
    np.testing.assert_array_equal(restore_rng(rng_state).standard_normal(4),
                                  expected)


def test_resume_matches_uninterrupted_training(tmp_path):
    """Save at iteration 30 of 60, restore into fresh objects, finish, and
    compare bit-for-bit against the uninterrupted run."""
    data = [TimeSeries(np.random.default_rng(s).standard_normal((4, 2)))
            for s in range(6)]

    def build(seed):
        r = np.random.default_rng(seed)
        enc = Encoder(2, 3, 4, r)
        head = VariationalHead(3, r)
        dec = RecurrentDecoder(2, 3, 4, 5, r)
        gen = GenerationHead(5, 2, r)
        return enc, head, dec, gen

    # uninterrupted run
    enc, head, dec, gen = build(0)
    rng = np.random.default_rng(1)
    opt = train_autoencoder_baseline(data, enc, head, dec, gen,
                                     BaselineConfig(), 60, rng)
    full = [p.value.copy() for p in opt.params]

    # split run with a checkpoint in the middle
    enc2, head2, dec2, gen2 = build(0)
    rng2 = np.random.default_rng(1)
    opt2 = train_autoencoder_baseline(data, enc2, head2, dec2, gen2,
                                      BaselineConfig(), 30, rng2)
    comps = {"encoder": enc2, "var_head": head2, "decoder": dec2,
             "gen_head": gen2}
    path = tmp_path / "mid.npz"
    save_checkpoint(path, {}, comps, step=30, rng=rng2, optimizers={"ae": opt2})

    enc3, head3, dec3, gen3 = build(42)  # different init, fully overwritten
    _, arrays, step, rng_state = load_checkpoint(path)
    comps3 = {"encoder": enc3, "var_head": head3, "decoder": dec3,
              "gen_head": gen3}
    opt3 = Adam(enc3.params() + head3.params() + dec3.params() + gen3.params())
    restore_components(arrays, comps3, optimizers={"ae": opt3})
    rng3 = restore_rng(rng_state)
    assert step == 30 and opt3.t == 30
    train_autoencoder_baseline(data, enc3, head3, dec3, gen3,
                               BaselineConfig(), 30, rng3, optimizer=opt3)
    resumed = [p.value.copy() for p in opt3.params]
    for a, b in zip(full, resumed):
        np.testing.assert_array_equal(a, b)


def test_missing_and_mismatched_parameters_rejected(tmp_path, rng):
    comps = _components(rng)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, {}, comps)
    _, arrays, _, _ = load_checkpoint(path)

    bigger = {"encoder": Encoder(2, 3, 4, rng), "decoder": comps["decoder"],
              "gen_head": comps["gen_head"], "extra": comps["encoder"]}
    # component name not present in the file -> missing parameter keys
    with pytest.raises(CheckpointFormatError, match="missing"):
        restore_components(arrays, {"nope": comps["encoder"]})
    # mismatched shape
    wrong = {"encoder": Encoder(2, 4, 4, rng)}
    with pytest.raises(CheckpointFormatError, match="shape"):
        restore_components(arrays, wrong)
    # failed restore must not have partially applied anything
    before = [p.value.copy() for p in comps["encoder"].params()]
    try:
        restore_components(arrays, {"encoder": comps["encoder"],
                                    "nope": comps["decoder"]})
    except CheckpointFormatError:
        pass
    for p, b in zip(comps["encoder"].params(), before):
        np.testing.assert_array_equal(p.value, b)


def test_corrupted_file_and_version_rejection(tmp_path, rng):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"this is not an npz archive")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "does_not_exist.npz")

    comps = _components(rng)
    good = tmp_path / "good.npz"
    save_checkpoint(good, {}, comps)
    data = dict(np.load(good, allow_pickle=False))
    data["format_version"] = np.array([FORMAT_VERSION + 1], dtype=np.int64)
    bad = tmp_path / "future.npz"
    with open(bad, "wb") as fh:
        np.savez(fh, **data)
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(bad)
