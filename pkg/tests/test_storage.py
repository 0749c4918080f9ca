import pytest

from emir.config import Settings, settings
from emir.errors import EmirError
from emir.storage import ArtifactStore


def test_artifact_limit_comes_from_the_environment(monkeypatch):
    monkeypatch.setenv("EMIR_MAX_ARTIFACT_BYTES", "4096")
    assert Settings().max_artifact_bytes == 4096
    monkeypatch.delenv("EMIR_MAX_ARTIFACT_BYTES")
    assert Settings().max_artifact_bytes == 512 * 1024 * 1024


def test_oversized_artifact_is_refused(tmp_path, monkeypatch):
    store = ArtifactStore(tmp_path)
    store.write_text("big.json", "x" * 64)
    monkeypatch.setattr(settings, "max_artifact_bytes", 16)
    with pytest.raises(EmirError) as err:
        store.read_text("big.json")
    assert err.value.code == "IO_ERROR"
    monkeypatch.setattr(settings, "max_artifact_bytes", 64)
    assert store.read_text("big.json") == "x" * 64


def test_checksums_skip_missing_artifacts(tmp_path):
    store = ArtifactStore(tmp_path)
    store.write_json("models/best.json", {"continuous": "knn"})
    sums = store.checksums(["models/best.json", "absent.json"])
    assert list(sums) == ["models/best.json"]
    assert len(sums["models/best.json"]) == 64
