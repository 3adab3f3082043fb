"""Run configuration, NDJSON path records, CSV estimate tables, JSON reports."""

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .paths import AgedPath, PathCollection, canonical_order
from .sampling import ConfigurationError

SCHEMA_VERSION = "1.0"
SCHEMA_MAJOR = 1


class ConfigError(ConfigurationError):
    """Every violation found in a configuration, each as ``(field path, message)``."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


class RecordError(ValueError):
    """A malformed or incompatible line in a path file."""


# ------------------------------------------------------------ numbers -----
def fmt(x):
    """Decimal form with 17 significant digits; reads back to the same double."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x} has no JSON form")
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def dumps(obj):
    """Compact JSON with sorted keys and 17-digit floats."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}"
                              for k, v in sorted(obj.items())) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite_or_null(x):
    return None if math.isinf(x) else float(x)


# ---------------------------------------------------------- path records --
def path_to_record(p):
    return {
        "schema_version": SCHEMA_VERSION,
        "birth": p.birth,
        "x0": p.x0,
        "end": _finite_or_null(p.end),
        "jumps": [[t, v] for t, v in zip(p.jump_times, p.jump_values)],
        "initial_age": p.initial_age,
        "age_jumps": [[t, t - o] for t, o in zip(p.origin_times, p.origins)],
        "born_into": bool(p.born_into),
        # exact origins: ages are t - origin, which a decimal age may not reproduce
        "origins": [p.origin0, *p.origins],
        "provenance": {k: p.meta[k] for k in ("replica", "walker", "rank", "level")
                       if k in p.meta},
    }


def _pairs(obj, name):
    if not isinstance(obj, list) or not all(isinstance(q, list) and len(q) == 2 for q in obj):
        raise RecordError(f"'{name}' must be a list of [time, value] pairs")
    a = np.array(obj, dtype=np.float64).reshape(-1, 2)
    return a[:, 0], a[:, 1]


def record_to_path(rec):
    if not isinstance(rec, dict):
        raise RecordError("record must be a JSON object")
    ver = rec.get("schema_version")
    if not isinstance(ver, str) or not ver.split(".")[0].isdigit():
        raise RecordError("missing or malformed schema_version")
    if int(ver.split(".")[0]) != SCHEMA_MAJOR:
        raise RecordError(f"unsupported schema major version {ver}")
    for key in ("birth", "x0", "jumps", "age_jumps"):
        if key not in rec:
            raise RecordError(f"missing field '{key}'")
    jt, jv = _pairs(rec["jumps"], "jumps")
    ot, ages = _pairs(rec["age_jumps"], "age_jumps")
    birth = float(rec["birth"])
    if "origins" in rec:
        org = np.asarray(rec["origins"], dtype=np.float64)
        if org.shape != (ot.size + 1,):
            raise RecordError("'origins' must have one entry more than 'age_jumps'")
        origin0, origins = float(org[0]), org[1:]
    else:
        origin0 = birth - float(rec.get("initial_age", 0.0))
        origins = ot - ages
    end = rec.get("end")
    prov = rec.get("provenance", {})
    p = AgedPath(birth, float(rec["x0"]), jt, jv, origin0, ot, origins,
                 math.inf if end is None else float(end), bool(rec.get("born_into", False)),
                 {k: int(v) for k, v in prov.items()})
    try:
        p.check(tol=1e-12)
    except ValueError as exc:
        raise RecordError(str(exc)) from None
    return p


def write_paths(collection, fh):
    """Write one record per line in canonical order."""
    for p in sorted(collection, key=canonical_order):
        fh.write(dumps(path_to_record(p)) + "\n")


def read_paths(fh, metadata=None):
    """Read a whole NDJSON stream; any bad line aborts with its line number."""
    out = []
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            out.append(record_to_path(json.loads(line)))
        except (json.JSONDecodeError, RecordError, ValueError, TypeError) as exc:
            raise RecordError(f"line {lineno}: {exc}") from None
    return PathCollection(tuple(out), dict(metadata or {}))


def save_paths(collection, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_paths(collection, fh)


def load_paths(path):
    with open(path, encoding="utf-8") as fh:
        return read_paths(fh)


# ------------------------------------------------------- estimate tables --
CSV_COLUMNS = ("estimator", "parameters", "estimate", "half_width", "stderr", "replicas",
               "status")


def estimate_rows_csv(rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        params = ";".join(f"{k}={_cell(v)}" for k, v in sorted(r["parameters"].items()))
        w.writerow([r["estimator"], params, _cell(r["estimate"]), _cell(r.get("half_width")),
                    _cell(r.get("stderr")), r.get("replicas", ""), r.get("status", "ok")])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt(v) if math.isfinite(v) else str(float(v))
    return str(v)


def report_json(obj):
    return dumps({"schema_version": SCHEMA_VERSION, **obj}) + "\n"


# ---------------------------------------------------------------- config --
START_KINDS = ("full", "dyadic", "theta", "lattice")


@dataclass
class StartSpec:
    kind: str = "full"
    levels: int = 2  # dyadic
    theta: float = 0.5  # theta grid
    space: tuple = (-2.0, 2.0)
    time: tuple = (0.0, 0.5)


@dataclass
class RunConfig:
    alpha: float = 1.5
    tail_constant: object = 0.25  # positive number or "calibrate"
    scale_n: int = 256
    start: StartSpec = field(default_factory=StartSpec)
    horizon: float = 1.0
    half_width: float = 32.0
    window: float = 4.0  # half-width of the analysis window
    seed: int = 0
    replicas: int = 1
    x_max: int = 1000
    max_events: int = 10 ** 9
    params: dict = field(default_factory=dict)  # per-subcommand settings

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["start"] = {f.name: getattr(self.start, f.name) for f in fields(self.start)}
        d["start"]["space"] = list(d["start"]["space"])
        d["start"]["time"] = list(d["start"]["time"])
        return d

    def engine(self, tail_constant=None, **over):
        from .engine import EngineConfig

        c = self.tail_constant if tail_constant is None else tail_constant
        if c == "calibrate":
            raise ConfigurationError("tail_constant must be resolved before simulating")
        kw = dict(alpha=self.alpha, tail_constant=float(c), scale_n=self.scale_n,
                  horizon=self.horizon, half_width=self.half_width, seed=self.seed,
                  x_max=self.x_max, max_events=self.max_events)
        kw.update(over)
        return EngineConfig(**kw)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _interval(v):
    return (isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_num(x) for x in v)
            and v[0] < v[1])


def parse_config(text):
    """Validate JSON text into a ``RunConfig``, collecting every violation."""
    try:
        raw = json.loads(text) if isinstance(text, (str, bytes)) else text
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"invalid JSON: {exc}")]) from None
    if not isinstance(raw, dict):
        raise ConfigError([("$", "configuration must be a JSON object")])
    bad = []
    known = {f.name for f in fields(RunConfig)}
    for k in raw:
        if k not in known:
            bad.append((k, "unknown field"))
    cfg = RunConfig()

    def take(name, ok, msg, conv=lambda v: v):
        if name in raw:
            v = raw[name]
            if ok(v):
                setattr(cfg, name, conv(v))
            else:
                bad.append((name, f"{msg}, got {v!r}"))

    take("alpha", lambda v: _is_num(v) and 1 < v < 2, "must lie in the open range (1,2)", float)
    take("tail_constant", lambda v: v == "calibrate" or (_is_num(v) and v > 0),
         'must be a positive number or "calibrate"', lambda v: v if v == "calibrate" else float(v))
    take("scale_n", lambda v: _is_int(v) and 1 <= v <= 2 ** 24, "must be an integer in [1, 2^24]")
    take("horizon", lambda v: _is_num(v) and v > 0, "must be positive", float)
    take("half_width", lambda v: _is_num(v) and v > 0, "must be positive", float)
    take("window", lambda v: _is_num(v) and v > 0, "must be positive", float)
    take("seed", lambda v: _is_int(v) and 0 <= v < 2 ** 64, "must be an integer in [0, 2^64)")
    take("replicas", lambda v: _is_int(v) and 1 <= v <= 10 ** 6, "must be an integer in [1, 10^6]")
    take("x_max", lambda v: _is_int(v) and 10 <= v <= 10 ** 7, "must be an integer in [10, 10^7]")
    take("max_events", lambda v: _is_int(v) and v >= 1, "must be a positive integer")
    take("params", lambda v: isinstance(v, dict), "must be an object", dict)

    if "start" in raw:
        st = raw["start"]
        if not isinstance(st, dict):
            bad.append(("start", "must be an object"))
        else:
            start_spec = StartSpec()
            for k in st:
                if k not in {f.name for f in fields(StartSpec)}:
                    bad.append((f"start.{k}", "unknown field"))
            kind = st.get("kind", "full")
            if kind not in START_KINDS:
                bad.append(("start.kind", f"must be one of {', '.join(START_KINDS)}, got {kind!r}"))
            else:
                start_spec.kind = kind
            if "levels" in st:
                if _is_int(st["levels"]) and 0 <= st["levels"] <= 12:
                    start_spec.levels = st["levels"]
                else:
                    bad.append(("start.levels", f"must be an integer in [0, 12], got {st['levels']!r}"))
            if "theta" in st:
                if _is_num(st["theta"]) and st["theta"] > 0:
                    start_spec.theta = float(st["theta"])
                else:
                    bad.append(("start.theta", f"must be positive, got {st['theta']!r}"))
            for k in ("space", "time"):
                if k in st:
                    if _interval(st[k]):
                        setattr(start_spec, k, (float(st[k][0]), float(st[k][1])))
                    else:
                        bad.append((f"start.{k}", f"must be an increasing pair [lo, hi], got {st[k]!r}"))
            cfg.start = start_spec
    if not bad:
        if cfg.half_width < 8 * cfg.window:
            bad.append(("half_width", f"must be at least 8x window ({8 * cfg.window}), "
                        f"got {cfg.half_width}"))
        if cfg.start.kind != "full":
            reach = max(abs(x) for x in cfg.start.space)
            if reach > cfg.window:
                bad.append(("start.space", f"must lie inside the analysis window "
                            f"[-{cfg.window}, {cfg.window}]"))
            if cfg.horizon <= cfg.start.time[1]:
                bad.append(("horizon", "must exceed the last birth time"))
    if bad:
        raise ConfigError(bad)
    return cfg


def serialize_config(cfg):
    return dumps(cfg.to_dict()) + "\n"
