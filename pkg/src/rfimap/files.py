"""File formats that couple the pipeline stages.

CSV tables:

* metric points    ``t,sat,rx_power_dbw_hz,cn0_dbhz,elev_deg`` (empty cn0 = not tracked)
* classified       ``t,sat,rx_power,cn0,label,margin``
* truth            ``t,label``

Model and region files are JSON.  A model file carries the sha256 of its
canonical content; a region file carries the hash of the model it was built
from, so a region file can only be used with that model.
"""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from .calibration import MetricPoint
from .errors import HashMismatch, OutputExists, SchemaViolation, Unreadable
from .nominal import NominalModel
from .regions import Label, RegionMap

MODEL_FORMAT = "rfimap.nominal/1"
REGION_FORMAT = "rfimap.regions/1"
POINT_FIELDS = ("t", "sat", "rx_power_dbw_hz", "cn0_dbhz", "elev_deg")
CLASSIFIED_FIELDS = ("t", "sat", "rx_power", "cn0", "label", "margin")


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def open_output(path, force: bool = False):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExists(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_text(path, text: str, force: bool = False) -> None:
    with open_output(path, force) as fh:
        fh.write(text)


def write_json(path, obj, force: bool = False) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n", force)


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise Unreadable(f"cannot read {os.fspath(path)}: {exc.strerror or exc}") from exc


def _read_rows(path) -> list:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise Unreadable(f"cannot read {os.fspath(path)}: {exc.strerror or exc}") from exc


# -- metric points ---------------------------------------------------------------

def write_points(path, points, force: bool = False) -> None:
    with open_output(path, force) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINT_FIELDS)
        for p in points:
            w.writerow([repr(float(p.timestamp)), p.sat_id, _num(p.rx_power), _num(p.cn0),
                        _num(p.elevation_deg)])


def read_points(path) -> list:
    out = []
    for k, row in enumerate(_read_rows(path), start=2):
        try:
            cn0 = row["cn0_dbhz"]
            out.append(MetricPoint(float(row["t"]), row["sat"], float(row["rx_power_dbw_hz"]),
                                   float(cn0) if cn0 not in ("", None) else None,
                                   float(row.get("elev_deg") or 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(k, f"bad metric row: {exc}") from None
    return out


def write_classified(path, items, force: bool = False) -> None:
    with open_output(path, force) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLASSIFIED_FIELDS)
        for it in items:
            p = it.point
            w.writerow([repr(float(p.timestamp)), p.sat_id, _num(p.rx_power), _num(p.cn0),
                        it.label_text, f"{it.margin:.6f}"])


def read_classified(path) -> list:
    """``(t, label_text)`` pairs from a classified CSV."""
    return [(float(r["t"]), r["label"]) for r in _read_rows(path)]


def write_truth(path, times, labels, force: bool = False) -> None:
    with open_output(path, force) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "label"))
        for t, lab in zip(times, labels):
            w.writerow([repr(float(t)), Label(lab).value])


def read_truth(path) -> list:
    return [(float(r["t"]), r["label"]) for r in _read_rows(path)]


def write_jsonl(path, records, force: bool = False) -> None:
    with open_output(path, force) as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


# -- model and region files ---------------------------------------------------------

def save_model(path, model: NominalModel, force: bool = False, **meta) -> str:
    digest = model.content_hash()
    meta.setdefault("created_utc", datetime.now(timezone.utc).isoformat(timespec="seconds"))
    write_json(path, {"format": MODEL_FORMAT, "model": model.to_dict(), "model_hash": digest,
                      "meta": meta}, force)
    return digest


def load_model(path) -> NominalModel:
    d = read_json(path)
    model = NominalModel.from_dict(d["model"])
    stored = d.get("model_hash")
    if stored is not None and stored != model.content_hash():
        raise HashMismatch(f"{path}: stored hash does not match model content")
    return model


def save_regions(path, regions: RegionMap, force: bool = False) -> None:
    write_json(path, {"format": REGION_FORMAT, "regions": regions.to_dict(),
                      "model_hash": regions.model_hash}, force)


def load_regions(path, model: NominalModel | None = None) -> RegionMap:
    """Load a region file; with ``model`` given, insist it was built from that model."""
    d = read_json(path)
    regions = RegionMap.from_dict(d["regions"])
    if model is not None:
        expected = model.content_hash()
        if regions.model_hash != expected:
            raise HashMismatch(
                f"{path} was built from model {str(regions.model_hash)[:12]}, not {expected[:12]}"
            )
    return regions
