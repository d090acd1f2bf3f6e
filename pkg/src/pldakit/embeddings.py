"""Containers for keyed speaker embeddings."""

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    LabelError,
    ParameterError,
)


@dataclass(frozen=True)
class Embedding:
    """A fixed-dimension real vector with a string key."""

    key: str
    values: np.ndarray

    def __post_init__(self):
        if not self.key:
            raise ParameterError("embedding key must be non-empty")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] < 1:
            raise DegenerateInputError(f"embedding '{self.key}' must be a 1-D vector")
        if not np.all(np.isfinite(v)):
            raise DegenerateInputError(f"embedding '{self.key}' has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


class EmbeddingArchive:
    """An ordered set of embeddings with unique keys and uniform dimension.

    Backed by a dense (n, d) matrix so batch operations stay vectorized;
    `get` and `lookup` resolve keys through an index.
    """

    def __init__(self, keys: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DegenerateInputError("archive matrix must be 2-D (n, d)")
        if matrix.shape[0] == 0:
            raise InsufficientDataError("archive must contain at least one embedding")
        if len(keys) != matrix.shape[0]:
            raise ParameterError(
                f"{len(keys)} keys for {matrix.shape[0]} rows"
            )
        if not np.all(np.isfinite(matrix)):
            raise DegenerateInputError("archive contains non-finite values")
        self._keys = tuple(str(k) for k in keys)
        for k in self._keys:
            if not k:
                raise ParameterError("archive keys must be non-empty")
        self._index = {k: i for i, k in enumerate(self._keys)}
        if len(self._index) != len(self._keys):
            seen, dup = set(), None
            for k in self._keys:
                if k in seen:
                    dup = k
                    break
                seen.add(k)
            raise ParameterError(f"duplicate archive key '{dup}'")
        self._matrix = matrix

    @classmethod
    def from_items(cls, items: Sequence[tuple[str, np.ndarray]]) -> "EmbeddingArchive":
        if not items:
            raise InsufficientDataError("archive must contain at least one embedding")
        keys = [k for k, _ in items]
        matrix = np.vstack([np.asarray(v, dtype=np.float64).reshape(1, -1) for _, v in items])
        return cls(keys, matrix)

    @property
    def keys(self) -> tuple[str, ...]:
        return self._keys

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def __len__(self) -> int:
        return self._matrix.shape[0]

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __iter__(self) -> Iterator[Embedding]:
        for k, row in zip(self._keys, self._matrix):
            yield Embedding(k, row)

    def get(self, key: str) -> np.ndarray:
        return self._matrix[self._index[key]]

    def lookup(self, keys: Sequence[str]) -> tuple[np.ndarray, list[str]]:
        """Resolve keys to row indices; returns (indices, missing keys)."""
        idx = np.empty(len(keys), dtype=np.intp)
        missing = []
        for i, k in enumerate(keys):
            j = self._index.get(k)
            if j is None:
                missing.append(k)
                idx[i] = -1
            else:
                idx[i] = j
        return idx, missing

    def transformed(self, fn) -> "EmbeddingArchive":
        """New archive with `fn` applied to the whole matrix."""
        return EmbeddingArchive(self._keys, fn(self._matrix))


class LabeledEmbeddings:
    """An archive plus a key -> speaker-label map, for supervised fitting."""

    def __init__(self, archive: EmbeddingArchive, speaker_of: Mapping[str, str]):
        for k in archive.keys:
            if k not in speaker_of:
                raise LabelError(f"no speaker label for key '{k}'")
            if not speaker_of[k]:
                raise LabelError(f"empty speaker label for key '{k}'")
        self.archive = archive
        self.speaker_of = dict(speaker_of)

    def speaker_codes(self) -> tuple[np.ndarray, list[str]]:
        """Per-row integer speaker codes and the speaker name table."""
        names = sorted({self.speaker_of[k] for k in self.archive.keys})
        code = {s: i for i, s in enumerate(names)}
        rows = np.array([code[self.speaker_of[k]] for k in self.archive.keys], dtype=np.intp)
        return rows, names

    @property
    def n_speakers(self) -> int:
        return len({self.speaker_of[k] for k in self.archive.keys})

    def __len__(self) -> int:
        return len(self.archive)
