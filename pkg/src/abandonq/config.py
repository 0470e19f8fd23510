"""JSON configuration: strict schema, typed instances, canonical serialization."""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .chain import EVAL_SCHEME
from .distributions import validate_assumption1
from .errors import SchemaError
from .kernel import SCHEMES
from .measures import measure_from_dict
from .model import QueueSpec
from .optimizer import DEFAULT_THETA, SUPPLY_RATIO
from .studies import StudySpec

TOP_KEYS = {"queues", "measures", "mu", "mu_ratio", "r", "scheme", "seed", "sim", "optimize",
            "bound", "fit", "study"}
SIM_KEYS = {"n", "burn_in", "estimator"}
OPT_KEYS = {"template", "measure", "varsigma", "mu_total", "theta", "knots", "eps", "p", "M",
            "d", "mu_min", "mu_max", "r", "r_check"}
BOUND_KEYS = {"r", "measure", "allow_large"}
FIT_KEYS = {"samples", "csv"}
DEFAULT_MEASURES = ("offered_sojourn", "abandonment")


@dataclass
class Config:
    queues: list = field(default_factory=list)
    measures: list = field(default_factory=list)
    mu: list = None
    mu_ratio: float = SUPPLY_RATIO
    r: int = 12
    scheme: str = EVAL_SCHEME
    seed: int = 0
    sim: dict = field(default_factory=lambda: {"n": 10**6, "burn_in": 10**5,
                                               "estimator": "rao_blackwell"})
    optimize: dict = None
    bound: dict = None
    fit: dict = None
    study: StudySpec = None

    def service_rates(self):
        if self.mu is not None:
            return [float(m) for m in self.mu]
        return [self.mu_ratio * q.intensity for q in self.queues]

    def to_dict(self):
        out = {"queues": [q.to_dict() for q in self.queues],
               "measures": [m.to_dict() for m in self.measures],
               "mu_ratio": self.mu_ratio, "r": self.r, "scheme": self.scheme, "seed": self.seed,
               "sim": dict(self.sim)}
        if self.mu is not None:
            out["mu"] = list(self.mu)
        for key in ("optimize", "bound", "fit"):
            if getattr(self, key) is not None:
                out[key] = dict(getattr(self, key))
        if self.study is not None:
            out["study"] = self.study.to_dict()
        return out


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def _line_of(text, name):
    if text is None or name is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(str(name)), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise SchemaError(f"{where} must be a JSON object", field=where)
    extra = sorted(set(d) - allowed)
    if extra:
        raise SchemaError(f"unknown key '{extra[0]}' in {where}", field=extra[0])


def parse_config(obj, *, require_admissible=True):
    _check_keys(obj, TOP_KEYS, "config")
    cfg = Config()
    queues = obj.get("queues", [])
    if not isinstance(queues, list):
        raise SchemaError("'queues' must be a list", field="queues")
    cfg.queues = [QueueSpec.from_dict(q) for q in queues]
    labels = [q.label for q in cfg.queues]
    if len(set(labels)) != len(labels):
        raise SchemaError("queue ids must be unique", field="id")
    if require_admissible:
        for q in cfg.queues:
            validate_assumption1(q.arrival, q.patience)
    cfg.measures = [measure_from_dict(m) for m in obj.get("measures", DEFAULT_MEASURES)]
    if "mu" in obj:
        mu = obj["mu"]
        mu = [mu] * len(cfg.queues) if isinstance(mu, (int, float)) else mu
        if len(mu) != len(cfg.queues) or any(not float(m) > 0 for m in mu):
            raise SchemaError("'mu' needs one positive rate per queue", field="mu")
        cfg.mu = [float(m) for m in mu]
    cfg.mu_ratio = float(obj.get("mu_ratio", SUPPLY_RATIO))
    if not cfg.mu_ratio > 0:
        raise SchemaError("mu_ratio must be positive", field="mu_ratio")
    cfg.r = int(obj.get("r", cfg.r))
    if cfg.r < 1:
        raise SchemaError("r must be >= 1", field="r")
    cfg.scheme = obj.get("scheme", cfg.scheme)
    if cfg.scheme not in SCHEMES:
        raise SchemaError(f"scheme must be one of {SCHEMES}", field="scheme")
    cfg.seed = int(obj.get("seed", 0))
    if "sim" in obj:
        _check_keys(obj["sim"], SIM_KEYS, "sim")
        cfg.sim = dict(cfg.sim, **obj["sim"])
        if cfg.sim["estimator"] not in ("rao_blackwell", "direct_event"):
            raise SchemaError("unknown estimator", field="estimator")
    if "optimize" in obj:
        _check_keys(obj["optimize"], OPT_KEYS, "optimize")
        opt = {"template": "equity_ost", "varsigma": None, "mu_total": None,
               "theta": list(DEFAULT_THETA), "knots": 7, "eps": 1e-3}
        opt.update(obj["optimize"])
        if opt["template"] not in ("generic", "equity_ost", "equity_ab"):
            raise SchemaError("unknown template", field="template")
        cfg.optimize = opt
    if "bound" in obj:
        _check_keys(obj["bound"], BOUND_KEYS, "bound")
        cfg.bound = dict({"r": 7, "measure": "abandonment", "allow_large": False}, **obj["bound"])
    if "fit" in obj:
        _check_keys(obj["fit"], FIT_KEYS, "fit")
        cfg.fit = dict(obj["fit"])
    if "study" in obj:
        if not isinstance(obj["study"], dict):
            raise SchemaError("'study' must be an object", field="study")
        cfg.study = StudySpec.from_dict(obj["study"])
    return cfg


def load_config(path, *, require_admissible=True):
    """Parse and validate; schema errors carry the offending line when it can be found."""
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno, field=None) from exc
    try:
        return parse_config(obj, require_admissible=require_admissible)
    except SchemaError as exc:
        if exc.line is None:
            exc.line = _line_of(text, exc.field)
        raise


def write_rows(path, rows, columns=None):
    """CSV with fixed column order and '%.17g' floats (byte-stable across runs)."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c, "")) for c in columns) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    s = str(v)
    return '"%s"' % s.replace('"', '""') if ("," in s or '"' in s) else s
