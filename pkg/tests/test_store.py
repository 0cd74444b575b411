import hashlib

import pytest

from hempchain.canonical import Digest
from hempchain.domain import FileRef
from hempchain.store import TAMPERED, DatabaseTampered, FileMissing, FileStore, StoreError


@pytest.fixture
def store(tmp_path):
    return FileStore(tmp_path / "objects")


def test_layout_is_content_addressed(store):
    data = b"lab report"
    ref = store.put_file(data)
    hexd = hashlib.sha256(data).hexdigest()
    assert ref.uri == f"{hexd[:2]}/{hexd[2:4]}/{hexd}"
    assert ref.file_digest.hex() == hexd
    assert ref.size_bytes == len(data)
    assert (store.root / ref.uri).read_bytes() == data
    assert store.get_verified(ref) == data


def test_identical_content_is_stored_once(store):
    a = store.put_file(b"same")
    b = store.put_file(b"same")
    assert a == b
    assert len([p for p in store.root.rglob("*") if p.is_file()]) == 1


def test_tampered_object_raises(store):
    ref = store.put_file(b"original")
    (store.root / ref.uri).write_bytes(b"origina1")
    with pytest.raises(DatabaseTampered) as err:
        store.get_verified(ref)
    assert str(err.value) == TAMPERED == "error, database is tampered"


def test_missing_object(store):
    ref = store.put_file(b"gone")
    (store.root / ref.uri).unlink()
    with pytest.raises(FileMissing):
        store.get_verified(ref)


def test_empty_file_refused(store):
    with pytest.raises(StoreError):
        store.put_file(b"")


def test_uri_cannot_escape_root(store):
    ref = FileRef(uri="../../etc/passwd", file_digest=Digest(bytes(32)), size_bytes=1)
    with pytest.raises(StoreError):
        store.get_verified(ref)
