"""Result tables, manifests, seeded parallel trial maps and SVG plots."""

from __future__ import annotations

import datetime as _dt
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..sampling import RngStream

CHUNK = 32


class RuntimeFailure(RuntimeError):
    """Experiment failed after its configuration was accepted (exit code 3)."""


@dataclass(frozen=True, eq=False)
class ResultTable:
    """Named numeric columns of equal length; NaN and infinities are rejected."""

    columns: dict
    name: str = "results"

    def __post_init__(self):
        cols = {}
        n = None
        for key, val in self.columns.items():
            arr = np.asarray(val)
            if arr.ndim != 1:
                arr = arr.reshape(-1)
            if arr.dtype == bool:
                arr = arr.astype(np.int64)
            if not (np.issubdtype(arr.dtype, np.integer) or np.issubdtype(arr.dtype, np.floating)):
                raise TypeError(f"column {key!r} is not numeric")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError(f"column {key!r} contains NaN or infinite values")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"column {key!r} has {arr.size} rows, expected {n}")
            arr = arr.copy()
            arr.flags.writeable = False
            cols[key] = arr
        object.__setattr__(self, "columns", cols)

    @property
    def rows(self) -> int:
        return next(iter(self.columns.values())).size if self.columns else 0

    def __getitem__(self, key) -> np.ndarray:
        return self.columns[key]

    def names(self) -> list[str]:
        return list(self.columns)

    def where(self, **eq) -> ResultTable:
        mask = np.ones(self.rows, dtype=bool)
        for k, v in eq.items():
            mask &= np.isclose(self.columns[k], v, rtol=0, atol=1e-12)
        return ResultTable({k: c[mask] for k, c in self.columns.items()}, self.name)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        names = self.names()
        buf.write(",".join(names) + "\n")
        fmts = ["%d" if np.issubdtype(self.columns[k].dtype, np.integer) else "%.17g" for k in names]
        cols = [self.columns[k] for k in names]
        for i in range(self.rows):
            buf.write(",".join(f % c[i] for f, c in zip(fmts, cols)) + "\n")
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> str:
        data = self.to_csv_text().encode()
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def read_csv(cls, path: str | Path, name: str = "results") -> ResultTable:
        lines = Path(path).read_text().splitlines()
        names = lines[0].split(",")
        raw = [ln.split(",") for ln in lines[1:]]
        cols = {}
        for j, key in enumerate(names):
            vals = [r[j] for r in raw]
            if all(_is_int(v) for v in vals):
                cols[key] = np.array([int(v) for v in vals], dtype=np.int64)
            else:
                cols[key] = np.array([float(v) for v in vals])
        return cls(cols, name)


def _is_int(s: str) -> bool:
    return s.lstrip("-").isdigit()


@dataclass
class ExperimentResult:
    tables: list[ResultTable]
    summary: dict = field(default_factory=dict)

    @property
    def main(self) -> ResultTable:
        return self.tables[0]

    def table(self, name: str) -> ResultTable:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


@dataclass
class ExperimentManifest:
    experiment: str
    config: dict
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    digests: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    threads: int = 1

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=_json_default) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentManifest:
        return cls(**json.loads(text))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def block_seed(seed: int, *block: int) -> int:
    """64-bit seed for one block of trials (one grid point, one repeat, ...)."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), *map(int, block)])
    return int(ss.generate_state(1, np.uint64)[0])


def block_streams(seed: int, *block: int) -> Callable[[int], RngStream]:
    root = block_seed(seed, *block)
    return lambda trial: RngStream(root, trial)


def map_trials(fn: Callable[[int], object], n: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(n-1)]`` computed on a thread pool.

    Trials run in fixed chunks and come back in index order, so the output does not
    depend on ``threads``. The compiled kernels release the GIL.
    """
    if n <= 0:
        return []
    chunks = [range(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]

    def run(ch):
        return [fn(i) for i in ch]

    if threads <= 1 or len(chunks) == 1:
        parts = [run(ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    return [r for p in parts for r in p]


def write_outputs(result: ExperimentResult, manifest: ExperimentManifest, out: str | Path, svg: bool = False) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for k, table in enumerate(result.tables):
        fname = "results.csv" if k == 0 else f"{table.name}.csv"
        digests[fname] = table.write_csv(out / fname)
        if svg:
            plot_svg(table, out / f"plot_{table.name}.svg")
    manifest.digests = digests
    manifest.summary = result.summary
    (out / "manifest.json").write_text(manifest.to_json())
    return out


# --- plots ----------------------------------------------------------------------


def plot_svg(table: ResultTable, path: str | Path, x: str | None = None, ys: Sequence[str] | None = None,
             width: int = 480, height: int = 320) -> None:
    """Polyline plot of columns ``ys`` against ``x`` (defaults: first column against the rest)."""
    names = table.names()
    x = x or names[0]
    ys = list(ys) if ys is not None else [n for n in names if n != x][:6]
    xs = np.asarray(table[x], dtype=float)
    pad = 40
    series = [np.asarray(table[y], dtype=float) for y in ys]
    allv = np.concatenate(series) if series else np.zeros(1)
    x0, x1 = _span(xs)
    y0, y1 = _span(allv)
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#888"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{x}</text>']
    order = np.argsort(xs, kind="mergesort")
    for k, (name, ys_k) in enumerate(zip(ys, series)):
        pts = " ".join(f"{sx(xs[i]):.2f},{sy(ys_k[i]):.2f}" for i in order)
        c = colours[k % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{pad + 4}" y="{pad + 14 + 14 * k}" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _span(v: np.ndarray) -> tuple[float, float]:
    lo, hi = (float(np.min(v)), float(np.max(v))) if v.size else (0.0, 1.0)
    if not math.isfinite(lo) or hi - lo == 0:
        return lo - 1.0, hi + 1.0
    return lo, hi
