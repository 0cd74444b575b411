"""Content-addressed off-chain file store.

Objects live at ``<root>/<hex[0:2]>/<hex[2:4]>/<hex>``; the relative path is
the URI anchored on chain next to the digest.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from .canonical import digest
from .domain import FileRef

TAMPERED = "error, database is tampered"

__all__ = ["FileRef", "FileStore", "StoreError", "FileMissing", "DatabaseTampered", "TAMPERED"]


class StoreError(Exception):
    pass


class FileMissing(StoreError, KeyError):
    pass


class DatabaseTampered(StoreError):
    def __init__(self, message: str = TAMPERED):
        super().__init__(message)


class FileStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def uri_for(hex_digest: str) -> str:
        return f"{hex_digest[:2]}/{hex_digest[2:4]}/{hex_digest}"

    def path_for(self, uri: str) -> Path:
        path = (self.root / uri).resolve()
        if self.root.resolve() not in path.parents:
            raise StoreError(f"uri escapes the store root: {uri!r}")
        return path

    def put_file(self, data: bytes) -> FileRef:
        if not data:
            raise StoreError("refusing to store an empty file")
        file_digest = digest(data)
        uri = self.uri_for(file_digest.hex())
        path = self.path_for(uri)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            except OSError as exc:
                Path(tmp).unlink(missing_ok=True)
                raise StoreError(f"could not store object: {exc}") from exc
        return FileRef(uri=uri, file_digest=file_digest, size_bytes=len(data))

    def get_verified(self, ref: FileRef) -> bytes:
        path = self.path_for(ref.uri)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise FileMissing(ref.uri) from None
        if digest(data) != ref.file_digest:
            raise DatabaseTampered()
        return data
