"""Content-addressed on-disk cache for relation bases.

Entries are JSON files named by the SHA-256 of their key fields (genus,
mode, piece, format version, engine version).  Payloads carry their own
checksum; a mismatch is treated as a miss with a warning so corrupted
entries are transparently recomputed.
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from fractions import Fraction

from .relations import RelationBasis

FORMAT_VERSION = 1


def _engine_version() -> str:
    from . import __version__
    return __version__


def cache_key(genus: int, mode: str, piece) -> str:
    payload = json.dumps(
        {
            "genus": genus,
            "mode": mode,
            "piece": list(piece),
            "format_version": FORMAT_VERSION,
            "engine_version": _engine_version(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _frac_str(v) -> str:
    f = Fraction(v)
    return f"{f.numerator}/{f.denominator}"


def _serialize_basis(basis: RelationBasis) -> dict:
    return {
        "bidegree": list(basis.bidegree),
        "monomial_basis": [[list(p) for p in m] for m in basis.monomial_basis],
        "rows": [{str(c): _frac_str(v) for c, v in r.items()} for r in basis.rows],
        "provenance": basis.provenance,
    }


def _deserialize_basis(data: dict) -> RelationBasis:
    return RelationBasis(
        bidegree=tuple(data["bidegree"]),
        monomial_basis=[tuple(tuple(p) for p in m) for m in data["monomial_basis"]],
        rows=[
            {int(c): Fraction(v) for c, v in r.items()} for r in data["rows"]
        ],
        provenance=data.get("provenance", []),
    )


def cache_put(cache_dir: str, key: str, basis: RelationBasis) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    payload = json.dumps(_serialize_basis(basis), sort_keys=True)
    checksum = hashlib.sha256(payload.encode()).hexdigest()
    doc = json.dumps({"checksum": checksum, "payload": payload})
    path = os.path.join(cache_dir, key + ".json")
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(doc)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise OSError(f"cache write failed at {path}: {exc}") from exc


def cache_get(cache_dir: str, key: str):
    path = os.path.join(cache_dir, key + ".json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        return None
    except (OSError, json.JSONDecodeError) as exc:
        print(f"warning: unreadable cache entry {path}: {exc}; recomputing",
              file=sys.stderr)
        return None
    payload = doc.get("payload")
    checksum = doc.get("checksum")
    if payload is None or hashlib.sha256(payload.encode()).hexdigest() != checksum:
        print(f"warning: checksum mismatch in cache entry {path}; recomputing",
              file=sys.stderr)
        return None
    try:
        return _deserialize_basis(json.loads(payload))
    except (KeyError, ValueError, TypeError) as exc:
        print(f"warning: malformed cache entry {path}: {exc}; recomputing",
              file=sys.stderr)
        return None
