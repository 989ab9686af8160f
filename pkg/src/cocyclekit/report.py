"""Report assembly and atomic JSON/CSV emission.

Reports must be byte-identical across reruns with the same (config, seed) on
one platform, so everything volatile (wall-clock) goes to a separate sidecar
file and stderr, never into the report itself.
"""

import csv
import dataclasses
import io
import json
import os
import tempfile

import numpy as np

#: Static disclaimers recorded in every report.
NOTES = (
    "uniform (for-all-omega) claims are certified on the sampled points plus "
    "the orbit points visited; this is a finite relaxation",
    "gram tail bounds are geometric extrapolations of the last included term; "
    "they are heuristic proxies, reported and propagated but not certified",
)


def to_jsonable(obj):
    """Recursively convert numpy/dataclass values into JSON-ready structures."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    return obj


def _atomic_write(path, data):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=False)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_json(path, obj):
    payload = json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"
    _atomic_write(path, payload.encode("utf-8"))


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([to_jsonable(x) for x in row])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


class Checks:
    """Pass/fail ledger for the invariants a command evaluates."""

    def __init__(self):
        self.items = []

    def add(self, name, value, tolerance, passed=None):
        if passed is None:
            passed = bool(value <= tolerance)
        self.items.append(
            {"name": name, "value": to_jsonable(value),
             "tolerance": to_jsonable(tolerance), "passed": bool(passed)}
        )
        return passed

    def add_bool(self, name, passed, detail=None):
        item = {"name": name, "passed": bool(passed)}
        if detail is not None:
            item["detail"] = to_jsonable(detail)
        self.items.append(item)
        return passed

    @property
    def all_passed(self):
        return all(item["passed"] for item in self.items)


def run_report(command, resolved_config, stages, checks, kernel_backend):
    return {
        "command": command,
        "config": resolved_config,
        "kernel_backend": kernel_backend,
        "stages": stages,
        "checks": checks.items,
        "notes": list(NOTES),
        "verdict": "pass" if checks.all_passed else "fail",
    }
