import pytest
import torch

from lexcrf.errors import IntegrityError, VersionError
from lexcrf.evaluate import evaluate_model
from lexcrf.io import dumps_model, load_model, loads_model, save_model


def test_save_load_save_is_byte_identical(tmp_path, small_checkpoint):
    path = tmp_path / "m.lexcrf"
    save_model(path, small_checkpoint)
    data = path.read_bytes()
    assert data.startswith(b"LEXCRF01")
    back = load_model(path)
    assert dumps_model(back) == data
    assert back.dev_f1 == small_checkpoint.dev_f1 and back.epoch == small_checkpoint.epoch
    assert all(torch.equal(back.params[k], small_checkpoint.params[k]) for k in back.params)
    assert back.optimizer["step"] == small_checkpoint.optimizer["step"]


def test_loaded_model_reproduces_dev_f1(small_checkpoint, small_corpus):
    dev = small_corpus[1]
    back = loads_model(dumps_model(small_checkpoint))
    assert evaluate_model(back.model(), dev).f1 == small_checkpoint.dev_f1


def test_truncated_and_corrupted_files(small_checkpoint):
    data = dumps_model(small_checkpoint)
    for bad in (data[:-1], data[:20], data[:8]):
        with pytest.raises(IntegrityError):
            loads_model(bad)
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    with pytest.raises(IntegrityError):
        loads_model(bytes(flipped))
    with pytest.raises(IntegrityError):
        loads_model(b"NOTAMODEL")


def test_version_mismatch(small_checkpoint):
    data = dumps_model(small_checkpoint)
    with pytest.raises(VersionError, match="02"):
        loads_model(b"LEXCRF02" + data[8:])
