import numpy as np
import pytest

from sparsepush.seeding import substream, substream_int, substream_seed


def test_same_labels_same_stream():
    a = substream(7, "node/1/batches").random(5)
    b = substream(7, "node/1/batches").random(5)
    assert a.tobytes() == b.tobytes()


def test_labels_and_seeds_separate_streams():
    draws = {
        (s, lab): substream(s, lab).random(3).tobytes()
        for s in (0, 1)
        for lab in ("init", "partition", "node/0/batches", "node/1/batches")
    }
    assert len(set(draws.values())) == len(draws)


def test_multi_label_path():
    assert substream(3, "a", "b").random() != substream(3, "ab").random()
    assert substream_seed(3, "x").spawn_key == substream_seed(3, "x").spawn_key


def test_int_seed_in_range():
    v = substream_int(5, "dataset")
    assert isinstance(v, int) and 0 <= v < 2**32
    assert v == substream_int(5, "dataset")


def test_negative_seed():
    with pytest.raises(ValueError):
        substream(-1, "x")
