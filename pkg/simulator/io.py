"""CSV results and run manifests."""

import hashlib
import json
import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.serializers.json import DjangoJSONEncoder
from django.utils import timezone

import selftrap
from cavity.exceptions import SchemaMismatch

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"
MISSING = "nan"
MISSING_MARKERS = {"", "nan", "NaN", "N/A", "untrapped", "no-decay"}
MANIFEST_SUFFIX = ".manifest.json"

COLUMN_ALIASES = {
    "P_uW": "power_uW",
    "power": "power_uW",
    "tau": "tau_ms",
    "t": "t_ms",
    "time_ms": "t_ms",
    "transmission": "transmission_norm",
    "signal": "transmission_norm",
    "N": "n_atoms",
}


# --- CSV ---
def emit_csv(columns, schema, path):
    """Write ``columns`` (name -> 1-D sequence) in the order of ``schema``.

    Numbers get 9 significant digits, missing values ``nan``; an empty
    series still writes the header line.
    """
    names = list(columns)
    if sorted(names) != sorted(schema):
        raise SchemaMismatch(
            f"columns {names} do not match the schema {list(schema)}"
        )
    lengths = {len(np.atleast_1d(columns[name])) for name in schema}
    if len(lengths) > 1:
        raise SchemaMismatch(f"columns of unequal length: {sorted(lengths)}")
    frame = pd.DataFrame(
        {name: np.atleast_1d(np.asarray(columns[name], dtype=float)) for name in schema},
        columns=list(schema),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=False,
        float_format=FLOAT_FORMAT,
        na_rep=MISSING,
        lineterminator="\n",
        encoding="utf-8",
    )
    logger.debug("wrote %d rows to %s", len(frame), path)
    return path


def clean_number(value):
    """Float from a CSV cell; thousands separators and stray units are
    dropped, missing markers become NaN."""
    if value is None:
        return np.nan
    s = str(value).strip().replace(",", "")
    if s in MISSING_MARKERS:
        return np.nan
    m = re.search(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?", s)
    if not m:
        raise SchemaMismatch(f"not a number: '{value}'")
    return float(m.group(0))


def ingest_csv(path, required):
    """Data frame with the ``required`` columns as floats.

    Known column aliases are renamed first; extra columns are kept.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc}")
    frame = frame.rename(
        columns={k: v for k, v in COLUMN_ALIASES.items() if v not in frame.columns}
    )
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise SchemaMismatch(
            f"{path} lacks column(s) {missing}; found {list(frame.columns)}"
        )
    for name in required:
        frame[name] = frame[name].map(clean_number).astype(float)
    return frame


# --- Manifests ---
def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path(output):
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + MANIFEST_SUFFIX)


def write_manifest(path, command, options, config, outputs, started, argv=None):
    """Record how a run was made and the sha256 of every output."""
    manifest = {
        "selftrap_version": selftrap.__version__,
        "command": command,
        "argv": argv,
        "options": options,
        "seed": config.get("seed") if config else options.get("seed"),
        "config": config,
        "started": started,
        "finished": timezone.now(),
        "outputs": {str(p): file_digest(p) for p in outputs},
    }
    path = Path(path)
    path.write_text(
        json.dumps(manifest, cls=DjangoJSONEncoder, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info("manifest written to %s", path)
    return path


def read_manifest(path):
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise SchemaMismatch(f"cannot read manifest {path}: {exc}")
    for key in ("command", "options", "outputs"):
        if key not in manifest:
            raise SchemaMismatch(f"manifest {path} has no '{key}'")
    return manifest


def changed_outputs(manifest):
    """Outputs whose current digest differs from the recorded one."""
    changed = []
    for name, recorded in manifest["outputs"].items():
        if not Path(name).exists() or file_digest(name) != recorded:
            changed.append(name)
    return changed


def write_report(path, report):
    """JSON report of a fit; NaN and infinity are written as null."""

    def clean(value):
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [clean(v) for v in value]
        if isinstance(value, (float, np.floating)):
            return float(value) if np.isfinite(value) else None
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, np.bool_):
            return bool(value)
        if isinstance(value, np.ndarray):
            return clean(value.tolist())
        return value

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(clean(report), cls=DjangoJSONEncoder, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return path
