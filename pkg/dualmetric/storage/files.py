"""File formats: domain directories, registries, maps, checkpoints and CSV reports"""

import csv
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from dualmetric.core.errors import DataValidationError, InputNotFoundError, ParseError
from dualmetric.models.dataset import DomainDataset, FeatureVector, OverlapRegistry, RatingRecord
from dualmetric.models.mapping import OrthogonalMap
from dualmetric.storage.dataset_ops import dedupe_latest

logger = logging.getLogger(__name__)

RATINGS_FILE = "ratings.csv"
USER_FEATURES_FILE = "user_features.csv"
ITEM_FEATURES_FILE = "item_features.csv"
META_FILE = "meta.csv"

RATINGS_HEADER = ["user_id", "item_id", "rating", "timestamp"]
REGISTRY_HEADER = ["user_id_a", "user_id_b"]
METRICS_HEADER = ["run_id", "domain", "metric", "value"]
CURVE_HEADER = ["x", "seed", "domain", "metric", "value", "seconds"]
NMF_HISTORY_HEADER = ["iter", "objective", "delta", "coupled"]


def _rows(path: Path) -> Iterable[tuple[int, list[str]]]:
    """Yield (line number, cells) for every non-empty line, header included"""
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for cells in reader:
            if cells and any(cell.strip() for cell in cells):
                yield reader.line_num, [cell.strip() for cell in cells]


def _expect_header(path: Path, rows: Iterable[tuple[int, list[str]]], expected: Sequence[str]) -> list[str]:
    try:
        line, header = next(iter(rows))
    except StopIteration:
        raise ParseError("file is empty", path=path, line=1) from None
    if header[: len(expected)] != list(expected):
        raise ParseError(f"expected header starting with {','.join(expected)}", path=path, line=line)
    return header


def _parse_float(value: str, path: Path, line: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"column {column!r}: not a number: {value!r}", path=path, line=line) from None


def read_meta(path: str | Path) -> dict[str, str]:
    """Read a two-column key,value file"""
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"missing {path.name} in {path.parent}")
    rows = iter(_rows(path))
    _expect_header(path, rows, ["key", "value"])
    meta = {}
    for line, cells in rows:
        if len(cells) != 2:
            raise ParseError("expected key,value", path=path, line=line)
        meta[cells[0]] = cells[1]
    return meta


def _read_features(path: Path, id_column: str) -> dict[str, FeatureVector]:
    rows = iter(_rows(path))
    header = _expect_header(path, rows, [id_column])
    width = len(header) - 1
    if width < 1:
        raise ParseError("feature file has no feature columns", path=path, line=1)
    features = {}
    for line, cells in rows:
        if len(cells) != width + 1:
            raise ParseError(f"expected {width + 1} columns, got {len(cells)}", path=path, line=line)
        owner = cells[0]
        if owner in features:
            raise ParseError(f"duplicate id {owner!r}", path=path, line=line)
        values = tuple(_parse_float(v, path, line, header[i + 1]) for i, v in enumerate(cells[1:]))
        features[owner] = FeatureVector(owner_id=owner, values=values)
    return features


def load_domain(directory: str | Path) -> DomainDataset:
    """
    Load one domain directory (ratings.csv, meta.csv and optional feature files).

    Ratings are validated but not normalised. Duplicate (user, item) rows keep the
    record with the latest timestamp.

    Raises:
        InputNotFoundError: If the directory or a required file is missing
        ParseError: On a malformed row (message carries the line number)
        DataValidationError: On a rating outside the declared scale or a dangling feature reference
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputNotFoundError(f"domain directory not found: {directory}")
    for required in (RATINGS_FILE, META_FILE):
        if not (directory / required).is_file():
            raise InputNotFoundError(f"missing {required} in {directory}")

    meta_path = directory / META_FILE
    meta = read_meta(meta_path)
    try:
        scale = (float(meta["rating_min"]), float(meta["rating_max"]))
    except KeyError as exc:
        raise ParseError(f"meta key {exc.args[0]!r} missing", path=meta_path) from None
    except ValueError:
        raise ParseError("rating_min/rating_max must be numbers", path=meta_path) from None
    domain_name = meta.get("domain_name", directory.name)

    ratings_path = directory / RATINGS_FILE
    rows = iter(_rows(ratings_path))
    _expect_header(ratings_path, rows, RATINGS_HEADER[:3])
    records = []
    for line, cells in rows:
        if len(cells) not in (3, 4):
            raise ParseError(f"expected 3 or 4 columns, got {len(cells)}", path=ratings_path, line=line)
        rating = _parse_float(cells[2], ratings_path, line, "rating")
        if not scale[0] <= rating <= scale[1]:
            raise DataValidationError(f"{ratings_path}:{line}: rating {rating} outside scale {scale}")
        timestamp = 0
        if len(cells) == 4 and cells[3]:
            try:
                timestamp = int(cells[3])
            except ValueError:
                raise ParseError(f"timestamp not an integer: {cells[3]!r}", path=ratings_path, line=line) from None
        try:
            records.append(RatingRecord(user_id=cells[0], item_id=cells[1], rating=rating, timestamp=timestamp))
        except ValidationError as exc:
            raise ParseError(str(exc.errors()[0]["msg"]), path=ratings_path, line=line) from None

    user_features = {}
    if (directory / USER_FEATURES_FILE).is_file():
        user_features = _read_features(directory / USER_FEATURES_FILE, "user_id")
    item_features = {}
    if (directory / ITEM_FEATURES_FILE).is_file():
        item_features = _read_features(directory / ITEM_FEATURES_FILE, "item_id")

    try:
        dataset = DomainDataset(
            domain_name=domain_name,
            ratings=tuple(dedupe_latest(records)),
            user_features=user_features,
            item_features=item_features,
            rating_scale=scale,
        )
    except ValidationError as exc:
        raise DataValidationError(f"{directory}: {exc.errors()[0]['msg']}") from None

    logger.info(
        "Loaded domain %s: ratings=%d users=%d items=%d features=%s",
        dataset.domain_name,
        len(dataset.ratings),
        len(dataset.user_ids()),
        len(dataset.item_ids()),
        dataset.has_features,
    )
    return dataset


def write_domain(ds: DomainDataset, directory: str | Path) -> Path:
    """Write a dataset in the directory layout read by ``load_domain``"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(
        directory / RATINGS_FILE,
        RATINGS_HEADER,
        ([r.user_id, r.item_id, repr(r.rating), r.timestamp] for r in ds.ratings),
    )
    write_csv(
        directory / META_FILE,
        ["key", "value"],
        [["rating_min", repr(ds.rating_scale[0])], ["rating_max", repr(ds.rating_scale[1])], ["domain_name", ds.domain_name]],
    )
    for filename, id_column, features in (
        (USER_FEATURES_FILE, "user_id", ds.user_features),
        (ITEM_FEATURES_FILE, "item_id", ds.item_features),
    ):
        if not features:
            continue
        width = next(iter(features.values())).dim
        write_csv(
            directory / filename,
            [id_column] + [f"f{j + 1}" for j in range(width)],
            ([owner] + [repr(v) for v in fv.values] for owner, fv in sorted(features.items())),
        )
    return directory


def write_meta(meta: dict[str, object], path: str | Path) -> None:
    write_csv(path, ["key", "value"], ([key, value] for key, value in meta.items()))


def write_registry(reg: OverlapRegistry, path: str | Path) -> None:
    write_csv(path, REGISTRY_HEADER, reg.pairs)


def read_registry(path: str | Path) -> OverlapRegistry:
    """Read an overlap registry written by ``write_registry``"""
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"registry not found: {path}")
    rows = iter(_rows(path))
    _expect_header(path, rows, REGISTRY_HEADER)
    pairs = []
    for line, cells in rows:
        if len(cells) != 2:
            raise ParseError("expected two ids", path=path, line=line)
        pairs.append((cells[0], cells[1]))
    try:
        return OverlapRegistry(pairs=tuple(pairs))
    except ValidationError as exc:
        raise DataValidationError(f"{path}: {exc.errors()[0]['msg']}") from None


def write_mapping(mapping: OrthogonalMap, path: str | Path) -> None:
    """Map export: first line k, then k rows of k values"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [str(mapping.k)] + [" ".join(repr(float(v)) for v in row) for row in mapping.matrix]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mapping(path: str | Path) -> OrthogonalMap:
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"mapping file not found: {path}")
    lines = [line.split() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    try:
        k = int(lines[0][0])
        matrix = np.array([[float(v) for v in row] for row in lines[1:]], dtype=np.float64)
    except (IndexError, ValueError):
        raise ParseError("malformed mapping file", path=path) from None
    if matrix.shape != (k, k):
        raise ParseError(f"expected {k}x{k} matrix, got {matrix.shape}", path=path)
    try:
        return OrthogonalMap(matrix=matrix)
    except ValidationError as exc:
        raise DataValidationError(f"{path}: {exc.errors()[0]['msg']}") from None


def write_tensors(tensors: dict[str, np.ndarray], path: str | Path) -> None:
    """Checkpoint: one tensor per line as ``name,rows,cols,values...`` (vectors stored as 1 x n)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, value in tensors.items():
        array = np.atleast_2d(np.asarray(value, dtype=np.float64))
        if array.ndim != 2:
            raise DataValidationError(f"tensor {name!r} has {array.ndim} dimensions")
        rows.append([name, array.shape[0], array.shape[1]] + [repr(float(v)) for v in array.ravel()])
    write_csv(path, None, rows)


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint written by ``write_tensors``"""
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"checkpoint not found: {path}")
    tensors = {}
    for line, cells in _rows(path):
        if len(cells) < 3:
            raise ParseError("expected name,rows,cols,values...", path=path, line=line)
        try:
            rows, cols = int(cells[1]), int(cells[2])
        except ValueError:
            raise ParseError("rows/cols must be integers", path=path, line=line) from None
        values = [_parse_float(v, path, line, cells[0]) for v in cells[3:]]
        if len(values) != rows * cols:
            raise ParseError(f"{cells[0]}: expected {rows * cols} values, got {len(values)}", path=path, line=line)
        tensors[cells[0]] = np.array(values, dtype=np.float64).reshape(rows, cols)
    return tensors


def write_embeddings(ids: Sequence[str], vectors: np.ndarray, path: str | Path) -> None:
    """Embedding export with header ``owner_id,e1..ek``"""
    width = vectors.shape[1]
    write_csv(
        path,
        ["owner_id"] + [f"e{j + 1}" for j in range(width)],
        ([owner] + [repr(float(v)) for v in row] for owner, row in zip(ids, vectors)),
    )


def read_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read an embedding export; returns ids and the row-aligned matrix"""
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"embedding file not found: {path}")
    rows = iter(_rows(path))
    header = _expect_header(path, rows, ["owner_id"])
    ids, vectors = [], []
    for line, cells in rows:
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} columns", path=path, line=line)
        ids.append(cells[0])
        vectors.append([_parse_float(v, path, line, "embedding") for v in cells[1:]])
    return ids, np.array(vectors, dtype=np.float64).reshape(len(ids), len(header) - 1)


def write_ratings(records: Iterable[RatingRecord], path: str | Path) -> None:
    write_csv(path, RATINGS_HEADER, ([r.user_id, r.item_id, repr(r.rating), r.timestamp] for r in records))


def read_ratings(path: str | Path) -> list[RatingRecord]:
    """Read a bare ratings file (already normalised test splits)"""
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"ratings file not found: {path}")
    rows = iter(_rows(path))
    _expect_header(path, rows, RATINGS_HEADER[:3])
    records = []
    for line, cells in rows:
        if len(cells) not in (3, 4):
            raise ParseError("expected 3 or 4 columns", path=path, line=line)
        timestamp = int(cells[3]) if len(cells) == 4 and cells[3] else 0
        records.append(
            RatingRecord(user_id=cells[0], item_id=cells[1], rating=_parse_float(cells[2], path, line, "rating"), timestamp=timestamp)
        )
    return records


def write_csv(path: str | Path, header: Sequence[str] | None, rows: Iterable[Sequence]) -> Path:
    """Write rows (with optional header) as UTF-8 CSV, creating parent directories"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header is not None:
            writer.writerow(header)
        writer.writerows(rows)
    return path
