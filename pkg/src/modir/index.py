"""Centroid/residual-quantized inverted-file index with two-stage search.

Every term embedding is stored as the id of its nearest centroid (Euclidean,
ties to the lowest id) plus a 2-bit-per-dimension quantized residual, so one
vector costs 2*dim + ceil(log2 |C|) bits. Per-centroid inverted lists drive
candidate generation: for each query term the n_probe nearest centroids are
probed, fetched embeddings are decompressed and scored by cosine, per-passage
maxima are summed across query terms (an unfetched passage/term pair adds 0,
making the stage a lower bound of decompressed MaxSim for nonnegative maxima),
and the top candidate_k passages are re-ranked with exact MaxSim over their
full decompressed embedding sets.

On-disk layout (directory; all integers little-endian; varint = unsigned
LEB128):

    meta.json       format_version, dim, centroid_count, embedding_count,
                    passage_count, id_bits, bits_per_embedding, seed
    centroids.f32   centroid_count x dim float32, row-major
    codec.f32       cut points (3 x dim) then representatives (4 x dim), float32
    codes.bin       per embedding, MSB-first: centroid id (id_bits bits) then
                    2 bits per dimension; one contiguous bitstream, zero-padded
                    to a byte at the end. Size = ceil(n * bits_per_embedding / 8).
    invlists.bin    u32 count of nonempty lists; per list (ascending centroid
                    id): varint centroid-id gap, varint length. Memberships
                    are not duplicated on disk: every embedding id belongs to
                    exactly the list named by its centroid-id field in
                    codes.bin, so the loader reconstructs each list (ascending
                    ids) from the codes and validates it against the directory.
    passages.bin    u32 passage count, varint embeddings-per-passage, u8 id
                    mode (0 = ids are decimal positions, 1 = explicit), then
                    per passage varint byte length + UTF-8 id when explicit
"""

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scoring
from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    InvalidConfigError,
    UnknownPassageError,
)

FORMAT_VERSION = 1


class DuplicateCentroidWarning(UserWarning):
    """Requested more centroids than distinct sample vectors."""


# ---------------------------------------------------------------------------
# Centroid selection


def centroid_count_for(total_estimate: int) -> int:
    """Power of two >= sqrt(total_estimate): 2 ** ceil(log2 sqrt n)."""
    if total_estimate < 1:
        raise InvalidConfigError(f"total_estimate must be >= 1, got {total_estimate}")
    return 1 << math.ceil(math.log2(math.sqrt(total_estimate))) if total_estimate > 1 else 1


def _stack_sample(sample) -> np.ndarray:
    mats = [np.asarray(m, dtype=np.float64) for m in sample]
    if not mats or sum(m.shape[0] for m in mats) == 0:
        raise EmptyInputError("centroid selection needs at least one sample vector")
    return np.vstack(mats)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = points[idx]
        np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1), out=d2)
    return centers


def select_centroids(
    sample,
    total_estimate: int,
    seed,
    *,
    centroid_count: int | None = None,
    max_iter: int = 25,
    tol: float = 1e-6,
) -> np.ndarray:
    """Seeded k-means++ plus Lloyd iterations over the sampled term embeddings.

    ``sample`` is an iterable of (rows, dim) matrices. The centroid count is
    the power of two at or above sqrt(total_estimate) unless overridden. When
    there are fewer distinct sample vectors than centroids, the sample is
    cycled and duplicate centroids are kept with a warning.
    """
    points = _stack_sample(sample)
    k = centroid_count if centroid_count is not None else centroid_count_for(total_estimate)
    if k < 1:
        raise InvalidConfigError(f"centroid count must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    distinct = np.unique(points, axis=0).shape[0]
    if distinct < k:
        warnings.warn(
            f"requested {k} centroids from {distinct} distinct vectors; duplicates kept",
            DuplicateCentroidWarning,
            stacklevel=2,
        )
    if k >= n:
        reps = -(-k // n)  # ceil
        return np.tile(points, (reps, 1))[:k]
    centroids = _kmeans_pp_init(points, k, rng)
    for _ in range(max_iter):
        d2 = _squared_distances(points, centroids)
        assign = np.argmin(d2, axis=1)
        new = centroids.copy()  # empty clusters keep their previous centroid
        for j in np.unique(assign):
            new[j] = points[assign == j].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift <= tol:
            break
    return centroids


def _squared_distances(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """(len(x), len(c)) squared Euclidean distances, clipped at zero."""
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0, out=d2)


def nearest_centroid_ids(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per vector; any tie resolves to the lowest centroid id.

    Duplicate centroid rows are collapsed before the distance computation and
    mapped back to the lowest original id, so ties are exact, not float-luck.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    cents = np.asarray(centroids, dtype=np.float64)
    if vectors.shape[1] != cents.shape[1]:
        raise DimensionMismatchError(f"vector dim {vectors.shape[1]} != centroid dim {cents.shape[1]}")
    uniq, first = np.unique(cents, axis=0, return_index=True)
    order = np.argsort(first, kind="stable")
    uniq = uniq[order]  # unique rows, ordered by first appearance (= lowest id)
    lowest = first[order]
    out = np.empty(vectors.shape[0], dtype=np.int64)
    chunk = max(1, int(4_000_000 // max(1, uniq.shape[0])))
    for start in range(0, vectors.shape[0], chunk):
        block = vectors[start : start + chunk]
        d2 = _squared_distances(block, uniq)
        # argmin takes the first minimum; rows are in lowest-original-id order
        out[start : start + chunk] = lowest[np.argmin(d2, axis=1)]
    return out


# ---------------------------------------------------------------------------
# Residual codec


@dataclass
class ResidualCodec:
    """Per-dimension 2-bit quantizer: three cut points and four representatives."""

    cuts: np.ndarray  # (3, dim)
    reps: np.ndarray  # (4, dim)

    @property
    def dim(self) -> int:
        return self.cuts.shape[1]

    def encode(self, residuals: np.ndarray) -> np.ndarray:
        """Bucket index 0..3 per dimension: the count of cut points <= value."""
        r = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
        if r.shape[1] != self.dim:
            raise DimensionMismatchError(f"residual dim {r.shape[1]} != codec dim {self.dim}")
        cuts = self.cuts.astype(np.float64)
        codes = (r >= cuts[0]).astype(np.uint8)
        codes += r >= cuts[1]
        codes += r >= cuts[2]
        return codes

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(np.asarray(codes))
        if codes.shape[1] != self.dim:
            raise DimensionMismatchError(f"code dim {codes.shape[1]} != codec dim {self.dim}")
        return self.reps.astype(np.float64)[codes, np.arange(self.dim)[None, :]]


def fit_codec(residual_sample, dim: int | None = None) -> ResidualCodec:
    """Quantile codec: cuts at the 25/50/75th percentiles per dimension,
    representatives are in-bucket means.

    Empty inner buckets fall back to the midpoint of their cut interval;
    empty outer buckets collapse onto the adjacent cut point.
    """
    r = np.atleast_2d(np.asarray(residual_sample, dtype=np.float64))
    if r.shape[0] == 0:
        raise EmptyInputError("codec fitting needs at least one residual vector")
    if dim is not None and r.shape[1] != dim:
        raise DimensionMismatchError(f"residual dim {r.shape[1]} != expected {dim}")
    cuts = np.percentile(r, [25.0, 50.0, 75.0], axis=0)
    codes = (r >= cuts[0]).astype(np.uint8) + (r >= cuts[1]) + (r >= cuts[2])
    d = r.shape[1]
    fallback = np.stack([cuts[0], 0.5 * (cuts[0] + cuts[1]), 0.5 * (cuts[1] + cuts[2]), cuts[2]])
    reps = np.empty((4, d))
    for bucket in range(4):
        mask = codes == bucket
        counts = mask.sum(axis=0)
        sums = np.where(mask, r, 0.0).sum(axis=0)
        reps[bucket] = np.where(counts > 0, sums / np.maximum(counts, 1), fallback[bucket])
    return ResidualCodec(cuts=cuts, reps=reps)


def compress(embedding, centroids, codec: ResidualCodec):
    """(nearest centroid id, 2-bit residual codes) for one embedding vector."""
    v = np.asarray(embedding, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError("compress expects a single vector")
    cid = int(nearest_centroid_ids(v[None, :], centroids)[0])
    residual = v - np.asarray(centroids, dtype=np.float64)[cid]
    return cid, codec.encode(residual)[0]


def decompress(centroid_id: int, residual_code, centroids, codec: ResidualCodec) -> np.ndarray:
    """Centroid plus the representative of each dimension's bucket."""
    cents = np.asarray(centroids, dtype=np.float64)
    if not 0 <= centroid_id < cents.shape[0]:
        raise InvalidConfigError(f"centroid id {centroid_id} out of range [0, {cents.shape[0]})")
    return cents[centroid_id] + codec.decode(residual_code)[0]


# ---------------------------------------------------------------------------
# Bit packing


def bits_per_embedding(dim: int, centroid_count: int) -> int:
    return 2 * dim + id_bit_width(centroid_count)


def id_bit_width(centroid_count: int) -> int:
    if centroid_count < 1:
        raise InvalidConfigError("centroid count must be >= 1")
    return math.ceil(math.log2(centroid_count)) if centroid_count > 1 else 0


def pack_codes(centroid_ids: np.ndarray, residual_codes: np.ndarray, id_bits: int) -> bytes:
    """One MSB-first bitstream: per embedding the centroid id then 2 bits/dim."""
    n, d = residual_codes.shape
    cols = []
    if id_bits:
        shifts = np.arange(id_bits - 1, -1, -1, dtype=np.uint64)
        cols.append(((centroid_ids.astype(np.uint64)[:, None] >> shifts) & 1).astype(np.uint8))
    res_bits = np.empty((n, 2 * d), dtype=np.uint8)
    res_bits[:, 0::2] = (residual_codes >> 1) & 1
    res_bits[:, 1::2] = residual_codes & 1
    cols.append(res_bits)
    return np.packbits(np.concatenate(cols, axis=1).ravel()).tobytes()


def unpack_codes(blob: bytes, count: int, dim: int, id_bits: int):
    width = id_bits + 2 * dim
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=count * width).reshape(count, width)
    if id_bits:
        weights = (1 << np.arange(id_bits - 1, -1, -1, dtype=np.uint64)).astype(np.uint64)
        centroid_ids = (bits[:, :id_bits].astype(np.uint64) * weights).sum(axis=1).astype(np.int64)
    else:
        centroid_ids = np.zeros(count, dtype=np.int64)
    res = bits[:, id_bits:]
    residual_codes = ((res[:, 0::2] << 1) | res[:, 1::2]).astype(np.uint8)
    return centroid_ids, residual_codes


def _encode_uvarint(values) -> bytes:
    out = bytearray()
    for value in values:
        v = int(value)
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def _decode_uvarint(buf: bytes, offset: int, count: int):
    values = np.empty(count, dtype=np.int64)
    for i in range(count):
        shift = 0
        acc = 0
        while True:
            byte = buf[offset]
            offset += 1
            acc |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
        values[i] = acc
    return values, offset


# ---------------------------------------------------------------------------
# The index


@dataclass(frozen=True)
class SearchParams:
    """Knobs for the two-stage search."""

    n_probe: int
    candidate_k: int = 1000
    final_k: int = 10

    def __post_init__(self):
        if self.n_probe < 1:
            raise InvalidConfigError(f"n_probe must be >= 1, got {self.n_probe}")
        if self.final_k < 1 or self.candidate_k < self.final_k:
            raise InvalidConfigError(
                f"need candidate_k >= final_k >= 1, got candidate_k={self.candidate_k} final_k={self.final_k}"
            )


@dataclass
class CompressedIndex:
    """Immutable compressed corpus: centroid table, per-embedding codes,
    inverted lists, and the passage map.

    Searches are read-only and safe to run concurrently; the only mutation
    after construction is an internal memo of decompressed centroid members,
    whose entries are deterministic and idempotent.
    """

    centroids: np.ndarray  # (C, dim) float32
    codec: ResidualCodec  # float32 cuts / reps
    centroid_ids: np.ndarray  # (n,) int64, per embedding
    residual_codes: np.ndarray  # (n, dim) uint8 in 0..3
    inverted_lists: list  # per centroid: ascending int64 embedding ids
    passage_ids: list  # external ids (strings), internal order
    passage_offsets: np.ndarray  # (P+1,) int64
    seed: int = 0
    _emb_passage: np.ndarray = field(default=None, repr=False)
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        counts = np.diff(self.passage_offsets)
        if self._emb_passage is None:
            self._emb_passage = np.repeat(np.arange(len(self.passage_ids), dtype=np.int64), counts)
        self._by_external = {pid: i for i, pid in enumerate(self.passage_ids)}

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def centroid_count(self) -> int:
        return self.centroids.shape[0]

    @property
    def embedding_count(self) -> int:
        return self.centroid_ids.shape[0]

    @property
    def passage_count(self) -> int:
        return len(self.passage_ids)

    @property
    def bits_per_embedding(self) -> int:
        return bits_per_embedding(self.dim, self.centroid_count)

    def internal_passage(self, external_id) -> int:
        key = external_id if isinstance(external_id, str) else str(external_id)
        if key not in self._by_external:
            raise UnknownPassageError(f"unknown passage id {external_id!r}")
        return self._by_external[key]

    def decompress_embeddings(self, emb_ids: np.ndarray) -> np.ndarray:
        cents = self.centroids.astype(np.float64)
        reps = self.codec.reps.astype(np.float64)
        codes = self.residual_codes[emb_ids]
        return cents[self.centroid_ids[emb_ids]] + reps[codes, np.arange(self.dim)[None, :]]

    def decompress_passage(self, internal: int) -> np.ndarray:
        lo, hi = self.passage_offsets[internal], self.passage_offsets[internal + 1]
        return self.decompress_embeddings(np.arange(lo, hi, dtype=np.int64))

    def decompressed_corpus(self) -> dict:
        """External id -> decompressed term matrix, for oracle comparisons."""
        return {pid: self.decompress_passage(i) for i, pid in enumerate(self.passage_ids)}

    def _centroid_members(self, cid: int):
        """(embedding ids, unit-norm decompressed rows, passage indices), cached."""
        hit = self._norm_cache.get(cid)
        if hit is None:
            ids = self.inverted_lists[cid]
            rows = scoring.normalize_rows(self.decompress_embeddings(ids)) if len(ids) else np.empty((0, self.dim))
            hit = (ids, rows, self._emb_passage[ids])
            self._norm_cache[cid] = hit
        return hit


def build_index(
    corpus: dict,
    seed: int = 0,
    *,
    centroid_count: int | None = None,
    sample_passages: int = 256,
) -> CompressedIndex:
    """Compress a corpus of per-passage term matrices into an inverted-file index.

    Passages are ingested in sorted-id order so a rebuild from the same corpus
    and seed is byte-identical. Centroids and the codec are fitted on a seeded
    sample of at most ``sample_passages`` passages, stored as float32, and all
    assignments/codes are computed against the stored float32 values.
    """
    if not corpus:
        raise EmptyInputError("cannot index an empty corpus")
    keys = sorted(corpus)
    matrices = []
    dim = None
    for key in keys:
        mat = np.asarray(corpus[key], dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise InvalidConfigError(f"passage {key!r} must be a nonempty 2-d matrix")
        if dim is None:
            dim = mat.shape[1]
        elif mat.shape[1] != dim:
            raise DimensionMismatchError(f"passage {key!r} dim {mat.shape[1]} != {dim}")
        if not np.all(np.isfinite(mat)):
            raise InvalidConfigError(f"passage {key!r} contains non-finite values")
        matrices.append(mat)

    counts = np.array([m.shape[0] for m in matrices], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    all_emb = np.vstack(matrices)
    total = int(offsets[-1])

    sample_rng = np.random.default_rng((seed, 0))
    n_sample = min(len(keys), sample_passages)
    sample_idx = np.sort(sample_rng.choice(len(keys), size=n_sample, replace=False))
    sample_rows = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in sample_idx])

    centroids = select_centroids(
        [all_emb[sample_rows]], total, (seed, 1), centroid_count=centroid_count
    ).astype(np.float32)

    assignments = nearest_centroid_ids(all_emb, centroids)
    sample_residuals = all_emb[sample_rows] - centroids.astype(np.float64)[assignments[sample_rows]]
    codec64 = fit_codec(sample_residuals, dim)
    codec = ResidualCodec(cuts=codec64.cuts.astype(np.float32), reps=codec64.reps.astype(np.float32))
    residual_codes = codec.encode(all_emb - centroids.astype(np.float64)[assignments])

    inverted = [np.nonzero(assignments == c)[0].astype(np.int64) for c in range(centroids.shape[0])]
    return CompressedIndex(
        centroids=centroids,
        codec=codec,
        centroid_ids=assignments,
        residual_codes=residual_codes,
        inverted_lists=inverted,
        passage_ids=[str(k) for k in keys],
        passage_offsets=offsets,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Search


def _check_query(query, index: CompressedIndex) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 2:
        raise DimensionMismatchError("query must be a (terms, dim) matrix")
    if q.shape[1] != index.dim:
        raise DimensionMismatchError(f"query dim {q.shape[1]} != index dim {index.dim}")
    return q


def approximate_candidates(query, index: CompressedIndex, params: SearchParams):
    """First-stage scores: per term, max cosine over embeddings fetched from the
    probed centroids, summed across terms; unfetched passage/term pairs add 0.

    Returns at most candidate_k (external passage id, approximate score) pairs,
    best first, score ties broken toward the lower passage id.
    """
    q = _check_query(query, index)
    if params.n_probe > index.centroid_count:
        raise InvalidConfigError(f"n_probe {params.n_probe} exceeds centroid count {index.centroid_count}")
    qn = scoring.normalize_rows(q)
    n_terms = q.shape[0]
    d2 = _squared_distances(q, index.centroids.astype(np.float64))
    cent_ids = np.arange(index.centroid_count)
    probes_by_centroid: dict[int, list[int]] = {}
    for i in range(n_terms):
        order = np.lexsort((cent_ids, d2[i]))[: params.n_probe]
        for cid in order:
            probes_by_centroid.setdefault(int(cid), []).append(i)

    p_count = index.passage_count
    term_scores = np.full((n_terms, p_count), -np.inf)
    flat_scores = term_scores.reshape(-1)
    for cid, term_rows in probes_by_centroid.items():
        ids, rows, passages = index._centroid_members(cid)
        if len(ids) == 0:
            continue
        sims = qn[term_rows] @ rows.T
        flat_idx = (np.asarray(term_rows)[:, None] * p_count + passages[None, :]).reshape(-1)
        np.maximum.at(flat_scores, flat_idx, sims.reshape(-1))

    fetched = term_scores > -np.inf
    hit = fetched.any(axis=0)
    passages = np.nonzero(hit)[0]
    if passages.size == 0:
        return []
    approx = np.where(fetched[:, passages], term_scores[:, passages], 0.0).sum(axis=0)
    order = np.lexsort((passages, -approx))[: params.candidate_k]
    return [(index.passage_ids[passages[i]], float(approx[i])) for i in order]


def exact_rerank(query, candidates, index: CompressedIndex):
    """Exact MaxSim over each candidate's full decompressed embedding set,
    sorted descending with ties toward the lower passage id."""
    q = _check_query(query, index)
    internal = np.array([index.internal_passage(pid) for pid in candidates], dtype=np.int64)
    scores = np.array([scoring.maxsim_score(q, index.decompress_passage(i)) for i in internal])
    order = np.lexsort((internal, -scores))
    return [(index.passage_ids[internal[i]], float(scores[i])) for i in order]


def search(query, index: CompressedIndex, params: SearchParams):
    """Approximate candidate generation followed by exact re-ranking."""
    candidates = approximate_candidates(query, index, params)
    reranked = exact_rerank(query, [pid for pid, _ in candidates], index)
    return reranked[: params.final_k]


# ---------------------------------------------------------------------------
# Serialization


def save_index(index: CompressedIndex, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    id_bits = id_bit_width(index.centroid_count)
    meta = {
        "format_version": FORMAT_VERSION,
        "dim": index.dim,
        "centroid_count": index.centroid_count,
        "embedding_count": index.embedding_count,
        "passage_count": index.passage_count,
        "id_bits": id_bits,
        "bits_per_embedding": index.bits_per_embedding,
        "seed": index.seed,
    }
    (directory / "meta.json").write_bytes(
        json.dumps(meta, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    )
    (directory / "centroids.f32").write_bytes(
        np.ascontiguousarray(index.centroids, dtype="<f4").tobytes()
    )
    (directory / "codec.f32").write_bytes(
        np.ascontiguousarray(index.codec.cuts, dtype="<f4").tobytes()
        + np.ascontiguousarray(index.codec.reps, dtype="<f4").tobytes()
    )
    (directory / "codes.bin").write_bytes(pack_codes(index.centroid_ids, index.residual_codes, id_bits))

    lists = bytearray()
    nonempty = [(cid, len(ids)) for cid, ids in enumerate(index.inverted_lists) if len(ids)]
    lists += struct.pack("<I", len(nonempty))
    prev = 0
    for cid, length in nonempty:
        lists += _encode_uvarint([cid - prev, length])
        prev = cid
    (directory / "invlists.bin").write_bytes(bytes(lists))

    passages = bytearray()
    passages += struct.pack("<I", index.passage_count)
    passages += _encode_uvarint(np.diff(index.passage_offsets))
    implicit = index.passage_ids == [str(i) for i in range(index.passage_count)]
    passages.append(0 if implicit else 1)
    if not implicit:
        for pid in index.passage_ids:
            raw = pid.encode("utf-8")
            passages += _encode_uvarint([len(raw)])
            passages += raw
    (directory / "passages.bin").write_bytes(bytes(passages))


def load_index(directory) -> CompressedIndex:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{directory} does not contain an index (missing meta.json)") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported index format version {meta.get('format_version')}")
    dim = meta["dim"]
    c_count = meta["centroid_count"]
    n = meta["embedding_count"]
    p_count = meta["passage_count"]
    id_bits = meta["id_bits"]

    centroids = np.frombuffer((directory / "centroids.f32").read_bytes(), dtype="<f4").reshape(c_count, dim)
    codec_raw = np.frombuffer((directory / "codec.f32").read_bytes(), dtype="<f4")
    if codec_raw.size != 7 * dim:
        raise FormatError("codec.f32 has the wrong size")
    codec = ResidualCodec(
        cuts=codec_raw[: 3 * dim].reshape(3, dim).copy(),
        reps=codec_raw[3 * dim :].reshape(4, dim).copy(),
    )
    centroid_ids, residual_codes = unpack_codes((directory / "codes.bin").read_bytes(), n, dim, id_bits)

    buf = (directory / "invlists.bin").read_bytes()
    (n_lists,) = np.frombuffer(buf[:4], dtype="<u4")
    offset = 4
    inverted = [np.empty(0, dtype=np.int64) for _ in range(c_count)]
    by_centroid = np.argsort(centroid_ids, kind="stable")  # groups lists, ids ascending
    grouped = centroid_ids[by_centroid]
    starts = np.searchsorted(grouped, np.arange(c_count), side="left")
    ends = np.searchsorted(grouped, np.arange(c_count), side="right")
    prev = 0
    for _ in range(int(n_lists)):
        head, offset = _decode_uvarint(buf, offset, 2)
        cid = prev + int(head[0])
        prev = cid
        members = by_centroid[starts[cid] : ends[cid]]
        if members.shape[0] != int(head[1]):
            raise FormatError(
                f"inverted list {cid} length {head[1]} disagrees with the codes section"
            )
        inverted[cid] = members.astype(np.int64)

    buf = (directory / "passages.bin").read_bytes()
    (stored_p,) = np.frombuffer(buf[:4], dtype="<u4")
    if int(stored_p) != p_count:
        raise FormatError("passage count mismatch between meta.json and passages.bin")
    offset = 4
    counts, offset = _decode_uvarint(buf, offset, p_count)
    explicit = buf[offset]
    offset += 1
    if explicit:
        ids = []
        for _ in range(p_count):
            length_arr, offset = _decode_uvarint(buf, offset, 1)
            length = int(length_arr[0])
            ids.append(buf[offset : offset + length].decode("utf-8"))
            offset += length
    else:
        ids = [str(i) for i in range(p_count)]
    offsets = np.concatenate(([0], np.cumsum(counts)))

    return CompressedIndex(
        centroids=centroids.copy(),
        codec=codec,
        centroid_ids=centroid_ids,
        residual_codes=residual_codes,
        inverted_lists=inverted,
        passage_ids=ids,
        passage_offsets=offsets,
        seed=meta["seed"],
    )
