"""Experiment runner: metrics, method roster, replication sweeps, CSV ingestion and report I/O."""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import blev, iboss, prereduce, slev, unif
from .datagen import ExperimentConfig, GeneratedDataset, generate_dataset, train_test_split
from .errors import (
    CoreElementsError,
    DimensionMismatch,
    EmptyInput,
    InvalidEpsPrime,
    ParseError,
    ZeroReference,
    ZeroResponse,
)
from .estimators import core_estimate, ols_full
from .matrix import DesignMatrix, condition_number
from .mom import mom_core_estimate, mom_ols_estimate
from .selection import select_core_elements
from .theory import (
    achieved_eps_prime,
    eps_empirical,
    eps_theoretical_from_parts,
    lambda0,
)

METHOD_NAMES = ("FullOLS", "Unif", "Blev", "Slev", "Iboss", "Core", "MomCore", "MomOls")
ELEMENT_METHODS = ("Core", "MomCore")
REPORT_FIELDS = (
    "method",
    "r",
    "replication",
    "mse",
    "pmse",
    "wall_time_s",
    "kappa",
    "lambda0",
    "eps_empirical",
    "eps_theoretical",
    "note",
)
EPS_CURVE_FIELDS = ("eps_prime", "r", "eps_prime_achieved", "eps_empirical", "eps_theoretical")
TRAIN_RATIO = 0.7

# spawn-key tags separating the RNG streams of one replication
_SPLIT_STREAM = 1
_METHOD_STREAM = 2


# --------------------------------------------------------------------- metrics


def mse(estimates, beta_ref):
    """Mean of ||b - beta_ref||^2 / ||beta_ref||^2 over ``estimates``."""
    beta_ref = np.asarray(beta_ref, dtype=np.float64)
    denom = float(beta_ref @ beta_ref)
    if denom == 0.0:
        raise ZeroReference("reference coefficient vector is zero")
    if len(estimates) == 0:
        raise EmptyInput("no estimates")
    total = 0.0
    for b in estimates:
        d = np.asarray(b, dtype=np.float64) - beta_ref
        total += float(d @ d) / denom
    return total / len(estimates)


def pmse(x_test, y_test, beta_train):
    """||X_test b - y_test||^2 / ||y_test||^2 for one replication."""
    xv = x_test.values if isinstance(x_test, DesignMatrix) else np.asarray(x_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.float64)
    denom = float(y_test @ y_test)
    if denom == 0.0:
        raise ZeroResponse("test response is identically zero")
    res = xv @ np.asarray(beta_train, dtype=np.float64) - y_test
    return float(res @ res) / denom


# --------------------------------------------------------------------- methods

_SPEC_RE = re.compile(r"^\s*([A-Za-z]+)\s*(?:\(\s*([^)]*?)\s*\))?\s*(?:\+pre\s*([0-9.]+))?\s*$")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    lam: float = 0.9
    k: int = 1
    prereduce: Optional[float] = None

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.name!r}; expected one of {METHOD_NAMES}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.prereduce is not None and self.prereduce < 1:
            raise ValueError("pre-reduction factor must be at least 1")

    @property
    def element_wise(self):
        return self.name in ELEMENT_METHODS

    @property
    def uses_r(self):
        return self.name not in ("FullOLS", "MomOls") or self.prereduce is not None

    @property
    def label(self):
        if self.name == "Slev":
            out = f"Slev({self.lam:g})"
        elif self.name in ("MomCore", "MomOls"):
            out = f"{self.name}({self.k})"
        else:
            out = self.name
        if self.prereduce is not None:
            out += f"+pre{self.prereduce:g}"
        return out

    @classmethod
    def parse(cls, spec):
        """Build from a label such as ``"Slev(0.9)"``, ``"MomCore(40)"``, ``"Iboss+pre10"`` or a dict."""
        if isinstance(spec, MethodSpec):
            return spec
        if isinstance(spec, dict):
            return cls(**spec)
        m = _SPEC_RE.match(str(spec))
        if not m:
            raise ValueError(f"cannot parse method spec {spec!r}")
        name, arg, pre = m.groups()
        kwargs = {}
        if pre:
            kwargs["prereduce"] = float(pre)
        if arg:
            if name == "Slev":
                kwargs["lam"] = float(arg)
            elif name in ("MomCore", "MomOls"):
                kwargs["k"] = int(arg)
            else:
                raise ValueError(f"{name} takes no argument")
        return cls(name, **kwargs)


def fit_method(spec, x, y, r, rng):
    """Fit one method at budget ``r``.

    Row samplers draw ``r`` rows, Core keeps ``r`` entries per column and
    MomCore splits those ``r`` entries per column evenly across its k blocks.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    y = np.asarray(y, dtype=np.float64)
    if spec.prereduce is not None:
        keep = prereduce(x.n, r, spec.prereduce, rng)
        x, y = x.rows(keep), y[keep]
    name = spec.name
    if name == "FullOLS":
        return ols_full(x, y)
    if name == "Core":
        return core_estimate(x, y, r)
    if name == "MomCore":
        return mom_core_estimate(x, y, r, spec.k, rng, diagnostics=False)[0]
    if name == "MomOls":
        return mom_ols_estimate(x, y, spec.k, rng)
    if name == "Unif":
        sample = unif(x.n, r, rng)
    elif name == "Blev":
        sample = blev(x, r, rng)
    elif name == "Slev":
        sample = slev(x, r, rng, spec.lam)
    else:
        sample = iboss(x, r)
    return sample.fit(x, y)


# --------------------------------------------------------------------- reports


@dataclass
class Cell:
    method: str
    r: int
    replication: int
    mse: float = math.nan
    pmse: float = math.nan
    wall_time_s: float = math.nan
    kappa: float = math.nan
    lambda0: float = math.nan
    eps_empirical: float = math.nan
    eps_theoretical: float = math.nan
    note: str = ""
    estimate: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def failed(self):
        return math.isnan(self.mse)


@dataclass
class RunReport:
    cells: list = field(default_factory=list)
    replications: int = 0
    methods: tuple = ()
    r_grid: tuple = ()

    def select(self, method, r=None):
        return [c for c in self.cells if c.method == method and (r is None or c.r == r)]

    def mse_values(self, method, r):
        return np.array([c.mse for c in self.select(method, r) if not c.failed])

    def mean_mse(self, method, r):
        v = self.mse_values(method, r)
        return float(v.mean()) if v.size else math.nan

    def aggregates(self):
        """One dict per (method, r): mean and standard error of every numeric field, plus the skip count."""
        out = []
        keys = []
        for c in self.cells:
            if (c.method, c.r) not in keys:
                keys.append((c.method, c.r))
        for method, r in keys:
            group = self.select(method, r)
            skipped = sum(c.failed for c in group)
            mean_row = {"method": method, "r": r, "replication": "mean"}
            se_row = {"method": method, "r": r, "replication": "stderr"}
            for name in REPORT_FIELDS[3:-1]:
                v = np.array([getattr(c, name) for c in group], dtype=np.float64)
                v = v[~np.isnan(v)]
                mean_row[name] = float(v.mean()) if v.size else math.nan
                se_row[name] = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
            note = f"skipped={skipped}" if skipped else ""
            mean_row["note"] = se_row["note"] = note
            out.extend([mean_row, se_row])
        return out

    def rows(self):
        per_rep = [{k: getattr(c, k) for k in REPORT_FIELDS} for c in self.cells]
        return per_rep + self.aggregates()


def _sort_cells(cells, methods, r_grid):
    m_order = {m: i for i, m in enumerate(methods)}
    r_order = {r: i for i, r in enumerate(r_grid)}
    return sorted(cells, key=lambda c: (m_order[c.method], r_order[c.r], c.replication))


# --------------------------------------------------------------------- runner


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def _core_diagnostics(cell, x, y, r, beta_ols):
    """Condition number, lambda0 and the two eps values for a core fit."""
    try:
        est, _, sketch = core_estimate(x, y, r, return_sketch=True)
        kappa = condition_number(x)
        cell.kappa = kappa
        cell.lambda0 = lambda0(x, sketch)
        resid = float(np.linalg.norm(y - x.values @ beta_ols))
        cell.eps_empirical = eps_empirical(x, y, est.beta, beta_ols)
        cell.eps_theoretical = eps_theoretical_from_parts(
            kappa, float(np.linalg.norm(y)), resid, achieved_eps_prime(x, sketch)
        )
    except InvalidEpsPrime:
        pass
    except CoreElementsError as exc:
        cell.note = _join(cell.note, f"diagnostics: {type(exc).__name__}")


def _join(a, b):
    return f"{a}; {b}" if a else b


def _timed_fit(spec, x, y, r, rng):
    t0 = time.perf_counter()
    est = fit_method(spec, x, y, r, rng)
    return est, time.perf_counter() - t0


def _failure(exc):
    return f"{type(exc).__name__}: {exc}"


def _replication_cells(data, train, test, beta_ref, methods, r_grid, seed, rep, opts):
    """Every (method, r) cell for one replication; RNG streams keyed by (seed, rep, method, r)."""
    cells = []
    beta_ols = None
    if opts["diagnostics"]:
        try:
            beta_ols = ols_full(data.x, data.y).beta
        except CoreElementsError:
            beta_ols = None
    for mi, spec in enumerate(methods):
        cached = None
        for ri, r in enumerate(r_grid):
            cell = Cell(spec.label, int(r), rep)
            if cached is not None:
                src = cached
                cell.mse, cell.pmse, cell.wall_time_s, cell.note, cell.estimate = (
                    src.mse, src.pmse, src.wall_time_s, src.note, src.estimate,
                )
                cells.append(cell)
                continue
            key = (rep, _METHOD_STREAM, mi, ri)
            try:
                est, elapsed = _timed_fit(spec, data.x, data.y, r, _stream(seed, *key, 0))
                cell.estimate = est.beta
                cell.mse = mse([est.beta], beta_ref)
                if opts["timing"]:
                    cell.wall_time_s = elapsed
            except (CoreElementsError, ValueError) as exc:
                cell.note = _failure(exc)
            if train is not None and not cell.failed:
                try:
                    est_tr = fit_method(spec, train.x, train.y, r, _stream(seed, *key, 1))
                    cell.pmse = pmse(test.x, test.y, est_tr.beta)
                except (CoreElementsError, ValueError) as exc:
                    cell.note = _join(cell.note, "pmse " + _failure(exc))
            if beta_ols is not None and spec.name == "Core" and spec.prereduce is None and not cell.failed:
                _core_diagnostics(cell, data.x, data.y, r, beta_ols)
            cells.append(cell)
            if not spec.uses_r:
                cached = cell
    return cells


def _synthetic_replication(args):
    config, methods, r_grid, rep, opts = args
    data = generate_dataset(config, _stream(config.seed, rep))
    train = test = None
    if opts["pmse"]:
        train, test = train_test_split(data, TRAIN_RATIO, _stream(config.seed, rep, _SPLIT_STREAM))
    return _replication_cells(data, train, test, data.beta_true, methods, r_grid, config.seed, rep, opts)


def _warm_up(methods, data, r_grid, seed):
    """One untimed fit per method so JIT compilation and caches stay out of the measurements."""
    for mi, spec in enumerate(methods):
        try:
            fit_method(spec, data.x, data.y, r_grid[0], _stream(seed, 2**31 - 1, mi))
        except (CoreElementsError, ValueError):
            pass


def _run(tasks, worker, workers):
    if workers <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks))


def _normalize(methods, r_grid):
    methods = tuple(MethodSpec.parse(m) for m in methods)
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate methods in roster: {labels}")
    r_grid = tuple(int(r) for r in r_grid)
    if not r_grid or min(r_grid) < 1:
        raise ValueError("r grid must be non-empty and positive")
    return methods, r_grid


def run_experiment(
    config,
    methods,
    r_grid,
    replications,
    *,
    workers=1,
    compute_pmse=True,
    diagnostics=False,
    timing=True,
):
    """Synthetic sweep: fresh data per replication, every method at every r.

    Failures are recorded as NaN cells carrying a reason, never raised.
    ``timing=False`` leaves ``wall_time_s`` empty so the output is reproducible
    byte for byte.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(dict(config))
    methods, r_grid = _normalize(methods, r_grid)
    if replications < 1:
        raise ValueError("replications must be at least 1")
    opts = {"pmse": compute_pmse, "diagnostics": diagnostics, "timing": timing}
    if timing:
        _warm_up(methods, generate_dataset(config, _stream(config.seed, 0)), r_grid, config.seed)
    tasks = [(config, methods, r_grid, rep, opts) for rep in range(replications)]
    cells = [c for batch in _run(tasks, _synthetic_replication, workers) for c in batch]
    return RunReport(_sort_cells(cells, [m.label for m in methods], r_grid), replications, methods, r_grid)


def _dataset_replication(args):
    x, y, beta_ref, methods, r_grid, seed, rep, opts = args
    n = x.n
    if opts["bootstrap"]:
        rows = np.sort(_stream(seed, rep).integers(0, n, size=n))
        data = GeneratedDataset(x.rows(rows), y[rows], beta_ref, math.nan)
    else:
        data = GeneratedDataset(x, y, beta_ref, math.nan)
    train = test = None
    if opts["pmse"]:
        full = GeneratedDataset(x, y, beta_ref, math.nan)
        train, test = train_test_split(full, TRAIN_RATIO, _stream(seed, rep, _SPLIT_STREAM))
    return _replication_cells(data, train, test, beta_ref, methods, r_grid, seed, rep, opts)


def run_dataset(
    x,
    y,
    methods,
    r_grid,
    replications,
    *,
    seed=0,
    bootstrap=True,
    workers=1,
    compute_pmse=True,
    diagnostics=False,
    timing=True,
):
    """Sweep on a fixed dataset; MSE is measured against the full-data OLS fit.

    With ``bootstrap`` each replication refits on n rows drawn with replacement.
    PMSE uses a fresh 70/30 split of the original rows per replication.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    y = np.asarray(y, dtype=np.float64)
    methods, r_grid = _normalize(methods, r_grid)
    beta_ref = ols_full(x, y).beta
    opts = {"pmse": compute_pmse, "diagnostics": diagnostics, "timing": timing, "bootstrap": bootstrap}
    if timing:
        _warm_up(methods, GeneratedDataset(x, y, beta_ref, math.nan), r_grid, seed)
    tasks = [(x, y, beta_ref, methods, r_grid, seed, rep, opts) for rep in range(replications)]
    cells = [c for batch in _run(tasks, _dataset_replication, workers) for c in batch]
    return RunReport(_sort_cells(cells, [m.label for m in methods], r_grid), replications, methods, r_grid)


# --------------------------------------------------------------------- eps curve


def minimal_budget(x, eps_prime):
    """Smallest r with ||X - X*||_2 / ||X||_2 <= eps_prime, by bisection on r.

    Returns ``(r, achieved)``; ``r == n`` always qualifies since then X* = X.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)

    def achieved(r):
        return achieved_eps_prime(x, select_core_elements(x, r)[1])

    lo, hi = 1, x.n
    best = 0.0
    while lo < hi:
        mid = (lo + hi) // 2
        a = achieved(mid)
        if a <= eps_prime:
            hi, best = mid, a
        else:
            lo = mid + 1
    if hi == x.n:
        best = achieved(hi)
    return hi, best


def eps_curve(x, y, eps_primes):
    """(eps', r, achieved eps', empirical eps, theoretical eps) for each target eps'.

    r is the smallest budget meeting the target, so the achieved value is the
    one plugged into the theoretical formula. Targets with eps' kappa^2 >= 1
    get a NaN theoretical value.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    y = np.asarray(y, dtype=np.float64)
    beta_ols = ols_full(x, y).beta
    resid = float(np.linalg.norm(y - x.values @ beta_ols))
    kappa = condition_number(x)
    y_norm = float(np.linalg.norm(y))
    out = []
    for target in eps_primes:
        r, ach = minimal_budget(x, float(target))
        est = core_estimate(x, y, r)
        emp = eps_empirical(x, y, est.beta, beta_ols)
        try:
            theo = eps_theoretical_from_parts(kappa, y_norm, resid, ach)
        except InvalidEpsPrime:
            theo = math.nan
        out.append({"eps_prime": float(target), "r": r, "eps_prime_achieved": ach,
                    "eps_empirical": emp, "eps_theoretical": theo})
    return out


# --------------------------------------------------------------------- I/O


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def _write_text(path, text):
    if path is None or path == "-":
        import sys

        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def rows_to_csv(rows, fields):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f)) for f in fields])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def rows_to_json(rows, fields):
    data = [{f: _json_value(row.get(f)) for f in fields} for row in rows]
    return json.dumps({"fields": list(fields), "rows": data}, indent=1) + "\n"


def emit_report(report, fmt, path):
    """Write a :class:`RunReport` (or a list of eps-curve dicts) as CSV or JSON.

    Empty numeric cells mean "not computed"; in JSON they are ``null``.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    if isinstance(report, RunReport):
        rows, fields = report.rows(), REPORT_FIELDS
    else:
        rows, fields = list(report), EPS_CURVE_FIELDS
    text = rows_to_csv(rows, fields) if fmt == "csv" else rows_to_json(rows, fields)
    _write_text(path, text)


def read_report_json(path):
    """Parse a JSON report back into row dicts, with ``null`` turned into NaN."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [{k: (math.nan if v is None else v) for k, v in row.items()} for row in doc["rows"]]


def ingest_csv(path, response_column=-1, has_header=True, center=False):
    """Read a numeric CSV into ``(DesignMatrix, y)``.

    ``response_column`` is a 0-based index (negative counts from the end) or a
    header name. Blank lines are skipped. ``center`` subtracts column means
    from the design and the mean from the response.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        records = []
        width = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if has_header and header is None:
                header = [c.strip() for c in row]
                width = len(header)
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionMismatch(f"line {line}: expected {width} fields, found {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(line, j + 1, f"non-numeric value {cell.strip()!r}") from None
                if not math.isfinite(v):
                    raise ParseError(line, j + 1, f"non-finite value {cell.strip()!r}")
                vals.append(v)
            records.append(vals)
    if not records:
        raise EmptyInput(f"{path}: no data rows")
    data = np.array(records, dtype=np.float64)
    if isinstance(response_column, str) and not _is_int(response_column):
        if header is None or response_column not in header:
            raise DimensionMismatch(f"response column {response_column!r} not found")
        col = header.index(response_column)
    else:
        col = int(response_column)
        if not -width <= col < width:
            raise DimensionMismatch(f"response column {col} out of range for {width} columns")
        col %= width
    if width < 2:
        raise DimensionMismatch("need at least one predictor column besides the response")
    y = data[:, col].copy()
    xv = np.delete(data, col, axis=1)
    if center:
        y -= y.mean()
    return DesignMatrix.from_array(xv, center=center), y


def _is_int(s):
    try:
        int(s)
        return True
    except ValueError:
        return False


def write_dataset_csv(dataset, path):
    """Write predictors x1..xp and response y with a header row."""
    xv = dataset.x.values
    names = [f"x{j + 1}" for j in range(xv.shape[1])] + ["y"]
    rows = [dict(zip(names, list(map(float, xv[i])) + [float(dataset.y[i])])) for i in range(xv.shape[0])]
    _write_text(path, rows_to_csv(rows, names))


def report_summary(report):
    """Aggregated mean rows only, handy for printing."""
    return [row for row in report.aggregates() if row["replication"] == "mean"]


__all__ = [
    "Cell",
    "MethodSpec",
    "RunReport",
    "emit_report",
    "eps_curve",
    "fit_method",
    "ingest_csv",
    "minimal_budget",
    "mse",
    "pmse",
    "read_report_json",
    "run_dataset",
    "run_experiment",
    "write_dataset_csv",
]
