"""
Dataset persistence: CSV with header f0..f{k},label,clean plus a JSON sidecar
recording the domain, class count and generating spec.
"""
import csv
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Tuple

import numpy as np

from core.errors import DatasetParseError
from data.dataset import DomainDataset, DomainTag

logger = logging.getLogger(__name__)

DATASET_SCHEMA_VERSION = 1


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def _atomic_write(path: Path, write):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, ds: DomainDataset) -> Tuple[Path, Path]:
    path = Path(path)
    header = [f'f{j}' for j in range(ds.in_dim)] + ['label', 'clean']

    def write_rows(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n_samples):
            clean = '' if ds.clean_flags is None else str(int(ds.clean_flags[i]))
            writer.writerow([repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i]), clean])

    sidecar = {
        'schema_version': DATASET_SCHEMA_VERSION,
        'domain_tag': ds.domain_tag.value,
        'class_count': int(ds.class_count),
        'n_samples': ds.n_samples,
        'in_dim': ds.in_dim,
        'has_clean_flags': ds.clean_flags is not None,
        'spec': ds.metadata,
    }
    _atomic_write(path, write_rows)
    _atomic_write(sidecar_path(path), lambda fh: json.dump(sidecar, fh, indent=2, sort_keys=True))
    logger.info(f"Saved {ds.domain_tag.value} dataset ({ds.n_samples} rows) to {path}")
    return path, sidecar_path(path)


def _read_sidecar(path: Path) -> dict:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise DatasetParseError(meta_path, "missing dataset sidecar")
    try:
        with open(meta_path, 'r', encoding='utf-8') as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetParseError(meta_path, f"invalid JSON: {e.msg}", e.lineno)
    if meta.get('schema_version') != DATASET_SCHEMA_VERSION:
        raise DatasetParseError(meta_path, f"unsupported schema_version {meta.get('schema_version')!r}")
    for key in ('domain_tag', 'class_count', 'n_samples', 'in_dim', 'has_clean_flags'):
        if key not in meta:
            raise DatasetParseError(meta_path, f"missing key '{key}'")
    return meta


def load(path) -> DomainDataset:
    """Parse a dataset; any malformed row aborts the load with its line number"""
    path = Path(path)
    if not path.exists():
        raise DatasetParseError(path, "dataset file not found")
    meta = _read_sidecar(path)
    in_dim, m, n = int(meta['in_dim']), int(meta['class_count']), int(meta['n_samples'])
    has_flags = bool(meta['has_clean_flags'])
    expected_header = [f'f{j}' for j in range(in_dim)] + ['label', 'clean']

    features = np.empty((n, in_dim))
    labels = np.empty(n, dtype=np.int64)
    flags = np.empty(n, dtype=bool)
    rows = 0
    with open(path, 'r', encoding='utf-8', newline='') as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise DatasetParseError(path, f"unexpected header {header!r}", 1)
        for row in reader:
            line = reader.line_num
            if rows >= n:
                raise DatasetParseError(path, f"more rows than the {n} recorded in the sidecar", line)
            if len(row) != in_dim + 2:
                raise DatasetParseError(path, f"expected {in_dim + 2} fields, got {len(row)}", line)
            try:
                features[rows] = [float(v) for v in row[:in_dim]]
                labels[rows] = int(row[in_dim])
            except ValueError as e:
                raise DatasetParseError(path, f"unparseable value: {e}", line)
            if not np.all(np.isfinite(features[rows])):
                raise DatasetParseError(path, "non-finite feature value", line)
            if not 0 <= labels[rows] < m:
                raise DatasetParseError(path, f"label {labels[rows]} outside [0, {m})", line)
            clean = row[in_dim + 1]
            if has_flags:
                if clean not in ('0', '1'):
                    raise DatasetParseError(path, f"clean flag must be 0 or 1, got {clean!r}", line)
                flags[rows] = clean == '1'
            elif clean != '':
                raise DatasetParseError(path, "clean flag present but sidecar records none", line)
            rows += 1
    if rows != n:
        raise DatasetParseError(path, f"truncated file: {rows} rows read, {n} expected", rows + 1)

    return DomainDataset(
        features=features,
        labels=labels,
        class_count=m,
        domain_tag=DomainTag(meta['domain_tag']),
        clean_flags=flags if has_flags else None,
        metadata=meta.get('spec') or {},
    )
