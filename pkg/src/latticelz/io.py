"""File formats, config grammar, presets, checkpoints and manifests.

Formats are deterministic and lossless:

* snapshot: binary grid file; 8-byte magic ``PLZSNAP1``, uint32 version,
  uint32 nx, uint32 ny, then row-major sitewise interleaved
  (Re psi_x, Im psi_x, Re psi_y, Im psi_y) as little-endian float64.
* columnar text: one header line of tab-separated channel names, one row
  per sample, floats encoded as shortest round-trip decimals.
* checkpoint: a directory holding ``field.snap``, ``series.tsv`` and
  ``state.json`` (integer step clock plus the full config echo), enough to
  resume a run bit-exactly.
* manifest: ``manifest.json`` with the resolved config, seed, code version
  and a sha256 inventory of every emitted file; the manifest digest covers
  config, seed, version and file digests but not wall times, so reruns with
  identical inputs produce identical digests.

Run configs are ini-style text: ``[section]`` headers, ``key = value``
lines, ``#`` comment lines.  Unknown sections or keys are errors; parse and
validation errors carry line/column positions and are reported
exhaustively, not one at a time.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .groundstate import GroundConfig
from .model import ModelParams, SpinorField, SweepSchedule
from .observables import ObservableSeries

__all__ = [
    "Checkpoint",
    "ConfigError",
    "ConfigResolver",
    "PRESETS",
    "ParamPreset",
    "SeriesFormatError",
    "SnapshotFormatError",
    "interaction_ratios",
    "parse_config",
    "read_checkpoint",
    "read_columns",
    "read_series",
    "read_snapshot",
    "sweep_config_echo",
    "write_checkpoint",
    "write_columns",
    "write_manifest",
    "write_series",
    "write_snapshot",
]

SNAPSHOT_MAGIC = b"PLZSNAP1"
SNAPSHOT_VERSION = 1


class SnapshotFormatError(ValueError):
    """Snapshot file is not in the expected binary format."""


class SeriesFormatError(ValueError):
    """Columnar text file is malformed."""


class ConfigError(ValueError):
    """One or more config problems; the message lists all of them."""

    def __init__(self, problems, path=None):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        self.path = path
        prefix = f"{path}: " if path else ""
        super().__init__(prefix + "; ".join(self.problems))


# -- parameter presets -------------------------------------------------------

@dataclass(frozen=True)
class ParamPreset:
    name: str
    t1: float
    t2: float
    u: float
    omega: float
    note: str

    def params(self, nx: int, ny: int) -> ModelParams:
        return ModelParams(t1=self.t1, t2=self.t2, u=self.u, omega=self.omega,
                           nx=nx, ny=ny)


PRESETS = {
    "paper-V17": ParamPreset(
        "paper-V17", -0.09, 0.0045, 0.38, 0.003,
        "square lattice 17 recoil energies deep; trap shallow enough to "
        "populate a few hundred sites (use 128x128 or larger)",
    ),
    "desk-32": ParamPreset(
        "desk-32", -0.09, 0.0045, 0.38, 0.01,
        "same band/interaction parameters with a tighter trap so a 32x32 "
        "lattice holds the cloud; sweeps run in minutes",
    ),
}


def interaction_ratios() -> list[tuple[str, float]]:
    """Harmonic-approximation onsite interaction ratios between orbitals."""
    return [("u_xx/u_yy", 1.0), ("u_xx/u_xy", 3.0), ("u_xx/u_yx", 3.0)]


# -- snapshot binary format --------------------------------------------------

def write_snapshot(field: SpinorField, path) -> Path:
    path = Path(path)
    nx, ny = field.shape
    if nx == 0 or ny == 0:
        raise SnapshotFormatError("refusing to write a zero-size lattice")
    data = np.empty((nx, ny, 4), dtype="<f8")
    data[:, :, 0] = field.psi_x.real
    data[:, :, 1] = field.psi_x.imag
    data[:, :, 2] = field.psi_y.real
    data[:, :, 3] = field.psi_y.imag
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, nx, ny))
        fh.write(data.tobytes())
    return path


def read_snapshot(path) -> SpinorField:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {blob[:8]!r}")
    version, nx, ny = struct.unpack_from("<III", blob, 8)
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    expected = 20 + nx * ny * 4 * 8
    if len(blob) != expected:
        raise SnapshotFormatError(
            f"{path}: truncated or padded ({len(blob)} bytes, expected {expected})"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=20).reshape(nx, ny, 4)
    psi_x = data[:, :, 0] + 1j * data[:, :, 1]
    psi_y = data[:, :, 2] + 1j * data[:, :, 3]
    return SpinorField(psi_x, psi_y)


# -- columnar text format ----------------------------------------------------

def _format_value(v: float) -> str:
    return repr(float(v))


def write_columns(path, names, columns) -> Path:
    """Tab-separated text: header of names, then one row per sample."""
    path = Path(path)
    names = list(names)
    if not names:
        raise SeriesFormatError("need at least one column")
    for name in names:
        if not name or re.search(r"\s", name):
            raise SeriesFormatError(f"bad column name {name!r}")
    columns = [np.asarray(c, dtype=np.float64) for c in columns]
    if len(columns) != len(names):
        raise SeriesFormatError(
            f"{len(names)} names but {len(columns)} columns"
        )
    length = columns[0].shape[0] if columns else 0
    if any(c.shape != (length,) for c in columns):
        raise SeriesFormatError("columns must be equal-length 1-d arrays")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\t".join(names) + "\n")
        for i in range(length):
            fh.write("\t".join(_format_value(c[i]) for c in columns) + "\n")
    return path


def read_columns(path):
    path = Path(path)
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise SeriesFormatError(f"{path}: empty file")
        names = header.rstrip("\n").split("\t")
        rows = [[] for _ in names]
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(names):
                raise SeriesFormatError(
                    f"{path}:{lineno}: {len(parts)} fields, expected {len(names)}"
                )
            for dst, token in zip(rows, parts):
                try:
                    dst.append(float(token))
                except ValueError:
                    raise SeriesFormatError(
                        f"{path}:{lineno}: not a number: {token!r}"
                    ) from None
    return names, {n: np.asarray(r, dtype=np.float64) for n, r in zip(names, rows)}


def write_series(series: ObservableSeries, path) -> Path:
    names = ["time", *series.channel_names]
    columns = [series.times] + [series.channel(n) for n in series.channel_names]
    return write_columns(path, names, columns)


def read_series(path) -> ObservableSeries:
    names, data = read_columns(path)
    if not names or names[0] != "time":
        raise SeriesFormatError(f"{path}: first column must be 'time'")
    channels = {n: data[n] for n in names[1:]}
    return ObservableSeries.from_arrays(data["time"], channels)


# -- checkpoints -------------------------------------------------------------

@dataclass
class Checkpoint:
    field: SpinorField
    step: int
    series: ObservableSeries
    config_echo: dict
    path: Path


def sweep_config_echo(cfg) -> dict:
    """JSON-safe echo of a SweepRunConfig, used for identity checks."""
    return {
        "params": asdict(cfg.params),
        "schedule": asdict(cfg.schedule),
        "seed_fraction": cfg.seed_fraction,
        "seed_phase": cfg.seed_phase,
        "stride": cfg.stride,
        "nonlinearity_update": cfg.nonlinearity_update,
        "rng_seed": cfg.rng_seed,
    }


def write_checkpoint(dir_path, field: SpinorField, step: int, cfg,
                     series: ObservableSeries) -> Path:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    write_snapshot(field, dir_path / "field.snap")
    write_series(series, dir_path / "series.tsv")
    state = {"format": 1, "step": int(step), "config": sweep_config_echo(cfg)}
    (dir_path / "state.json").write_text(
        json.dumps(state, sort_keys=True, indent=1), encoding="ascii")
    return dir_path


def read_checkpoint(dir_path) -> Checkpoint:
    dir_path = Path(dir_path)
    state = json.loads((dir_path / "state.json").read_text(encoding="ascii"))
    if state.get("format") != 1:
        raise ConfigError(f"unsupported checkpoint format {state.get('format')}",
                          path=dir_path)
    return Checkpoint(
        field=read_snapshot(dir_path / "field.snap"),
        step=int(state["step"]),
        series=read_series(dir_path / "series.tsv"),
        config_echo=state["config"],
        path=dir_path,
    )


# -- manifest ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, *, config_echo: dict, seed, warnings, files,
                   started: float, finished: float) -> tuple[Path, str]:
    """Write manifest.json; returns (path, digest).

    The digest covers config, seed, code version and the per-file digests.
    Wall times and warnings are recorded but excluded from the digest so
    reruns with identical config and seed yield identical digests.
    """
    out_dir = Path(out_dir)
    inventory = {}
    for f in files:
        f = Path(f)
        inventory[str(f.relative_to(out_dir))] = _sha256(f)
    core = {
        "config": config_echo,
        "seed": seed,
        "version": __version__,
        "files": inventory,
    }
    digest = hashlib.sha256(
        json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    manifest = dict(core)
    manifest["manifest_digest"] = digest
    manifest["warnings"] = list(warnings)
    manifest["wall_time"] = {"started": started, "finished": finished}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1),
                    encoding="ascii")
    return path, digest


# -- config grammar ----------------------------------------------------------

@dataclass(frozen=True)
class ConfigEntry:
    raw: str
    line: int
    col: int


_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_-]+)\]\s*$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_config(path) -> dict[str, dict[str, ConfigEntry]]:
    """Parse the ini-style grammar; positions are 1-based (line, column)."""
    path = Path(path)
    doc: dict[str, dict[str, ConfigEntry]] = {}
    current: str | None = None
    problems: list[str] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                  start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            m = _SECTION_RE.match(stripped)
            if not m:
                problems.append(f"line {lineno}, col 1: malformed section header")
                current = None
                continue
            name = m.group(1)
            if name in doc:
                problems.append(f"line {lineno}, col 1: duplicate section [{name}]")
            current = name
            doc.setdefault(name, {})
            continue
        if "=" not in line:
            problems.append(
                f"line {lineno}, col 1: expected 'key = value' or '[section]'")
            continue
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        col = line.index(key) + 1 if key else 1
        if not _KEY_RE.match(key):
            problems.append(f"line {lineno}, col {col}: bad key {key!r}")
            continue
        if current is None:
            problems.append(
                f"line {lineno}, col {col}: key {key!r} outside any section")
            continue
        if key in doc[current]:
            problems.append(
                f"line {lineno}, col {col}: duplicate key {key!r} in [{current}]")
            continue
        doc[current][key] = ConfigEntry(value_part.strip(), lineno, col)
    if problems:
        raise ConfigError(problems, path=path)
    return doc


def _conv_float(raw: str) -> float:
    return float(raw)


def _conv_int(raw: str) -> int:
    return int(raw, 10)


def _conv_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _conv_str(raw: str) -> str:
    return raw


def _conv_float_list(raw: str) -> list[float]:
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return [float(s) for s in items]


_MISSING = object()


class _Section:
    def __init__(self, resolver: "ConfigResolver", name: str):
        self._resolver = resolver
        self._name = name
        self._entries = dict(resolver.doc.get(name, {}))

    def take(self, key: str, conv, default=_MISSING):
        entry = self._entries.pop(key, None)
        if entry is None:
            if default is _MISSING:
                self._resolver.problems.append(
                    f"[{self._name}] missing required key {key!r}")
                return None
            return default
        try:
            return conv(entry.raw)
        except ValueError as exc:
            self._resolver.problems.append(
                f"[{self._name}] {key} (line {entry.line}, col {entry.col}): {exc}")
            return None

    def close(self) -> None:
        for key, entry in self._entries.items():
            self._resolver.problems.append(
                f"[{self._name}] unknown key {key!r} (line {entry.line}, "
                f"col {entry.col})")


class ConfigResolver:
    """Strict, exhaustive resolution of a parsed config document.

    Every section a command understands is pulled through the matching
    method; ``finish()`` then fails loudly on anything left over, listing
    all problems at once.
    """

    def __init__(self, doc, path=None):
        self.doc = doc
        self.path = path
        self.problems: list[str] = []
        self._seen: set[str] = set()

    def _section(self, name: str, required_hint: str | None = None) -> _Section:
        self._seen.add(name)
        if name not in self.doc and required_hint is not None:
            self.problems.append(
                f"missing required section [{name}] ({required_hint})")
        return _Section(self, name)

    def model(self, default_nx: int = 128, default_ny: int | None = None):
        sec = self._section(
            "model",
            required_hint="keys: preset or t1, t2, u, omega; optional nx, ny")
        preset_name = sec.take("preset", _conv_str, None)
        preset = None
        if preset_name is not None:
            preset = PRESETS.get(preset_name)
            if preset is None:
                self.problems.append(
                    f"[model] unknown preset {preset_name!r}; "
                    f"have {sorted(PRESETS)}")
        def base(attr, fallback):
            return getattr(preset, attr) if preset is not None else fallback
        t1 = sec.take("t1", _conv_float, base("t1", _MISSING))
        t2 = sec.take("t2", _conv_float, base("t2", _MISSING))
        u = sec.take("u", _conv_float, base("u", _MISSING))
        omega = sec.take("omega", _conv_float, base("omega", _MISSING))
        nx = sec.take("nx", _conv_int, default_nx)
        ny = sec.take("ny", _conv_int, default_ny if default_ny else default_nx)
        sec.close()
        if self.problems or _MISSING in (t1, t2, u, omega) or None in (
                t1, t2, u, omega, nx, ny):
            return None
        try:
            return ModelParams(t1=t1, t2=t2, u=u, omega=omega, nx=nx, ny=ny)
        except ValueError as exc:
            self.problems.append(f"[model] {exc}")
            return None

    def schedule(self):
        sec = self._section(
            "schedule",
            required_hint="keys: lambda, dt, and t_i/t_f or edge_detuning")
        lam = sec.take("lambda", _conv_float)
        dt = sec.take("dt", _conv_float)
        edge = sec.take("edge_detuning", _conv_float, None)
        t_i = sec.take("t_i", _conv_float, None)
        t_f = sec.take("t_f", _conv_float, None)
        hold_pre = sec.take("hold_pre", _conv_float, 0.0)
        hold_post = sec.take("hold_post", _conv_float, 0.0)
        sec.close()
        if lam is not None and lam <= 0:
            self.problems.append("[schedule] lambda > 0 required")
            return None
        if None in (lam, dt):
            return None
        if edge is not None:
            if t_i is not None or t_f is not None:
                self.problems.append(
                    "[schedule] give either edge_detuning or t_i/t_f, not both")
                return None
            t_i, t_f = -edge / lam, edge / lam
        if t_i is None or t_f is None:
            self.problems.append(
                "[schedule] need t_i and t_f (or edge_detuning)")
            return None
        try:
            return SweepSchedule(lam=lam, t_i=t_i, t_f=t_f, dt=dt,
                                 hold_pre=hold_pre, hold_post=hold_post)
        except ValueError as exc:
            self.problems.append(f"[schedule] {exc}")
            return None

    def ground(self, default_detuning: float | None = None,
               require_detuning: bool = False):
        sec = self._section("ground")
        defaults = GroundConfig()
        if require_detuning:
            detuning = sec.take("detuning", _conv_float)
        else:
            detuning = sec.take("detuning", _conv_float,
                                0.0 if default_detuning is None
                                else default_detuning)
        kwargs = dict(
            tol_energy=sec.take("tol_energy", _conv_float, defaults.tol_energy),
            tol_state=sec.take("tol_state", _conv_float, defaults.tol_state),
            max_steps=sec.take("max_steps", _conv_int, defaults.max_steps),
            init=sec.take("init", _conv_str, defaults.init),
            rng_seed=sec.take("seed", _conv_int, defaults.rng_seed),
            dt=sec.take("dt", _conv_float, defaults.dt),
            dt_min=sec.take("dt_min", _conv_float, defaults.dt_min),
            dt_coarse=sec.take("dt_coarse", _conv_float, defaults.dt_coarse),
        )
        sec.close()
        if self.problems or detuning is None or None in kwargs.values():
            return None
        init_modes = ("adapted-carrier", "gaussian", "random-phase-gaussian")
        if kwargs["init"] not in init_modes:
            self.problems.append(
                f"[ground] init must be one of {init_modes}, "
                f"got {kwargs['init']!r}")
            return None
        try:
            return GroundConfig(detuning=detuning, **kwargs)
        except ValueError as exc:
            self.problems.append(f"[ground] {exc}")
            return None

    def sweep_options(self) -> dict:
        sec = self._section("sweep")
        out = dict(
            seed_fraction=sec.take("seed_fraction", _conv_float, 0.01),
            seed_phase=sec.take("seed_phase", _conv_str, "aligned"),
            stride=sec.take("stride", _conv_int, 20),
            checkpoint_every=sec.take("checkpoint_every", _conv_int, 0),
        )
        sec.close()
        return out

    def scan_options(self, kind: str) -> dict:
        sec = self._section("scan", required_hint=f"keys: {kind}")
        out: dict = {}
        if kind == "lambdas":
            out["lambdas"] = sec.take("lambdas", _conv_float_list)
            out["edge_detuning"] = sec.take("edge_detuning", _conv_float, 1e-3)
            lams = out["lambdas"]
            if lams is not None and any(l <= 0 for l in lams):
                self.problems.append("[scan] lambda > 0 required for every entry")
        else:
            out["detunings"] = sec.take("detunings", _conv_float_list)
            out["warm_start"] = sec.take("warm_start", _conv_bool, True)
        sec.close()
        return out

    def spectrum_options(self) -> dict:
        sec = self._section("spectrum", required_hint="keys: input")
        out = dict(
            input=sec.take("input", _conv_str),
            taper=sec.take("taper", _conv_str, "hann"),
            detrend=sec.take("detrend", _conv_bool, True),
            window_start=sec.take("window_start", _conv_float, None),
        )
        sec.close()
        if out["taper"] not in ("hann", "none"):
            self.problems.append(
                f"[spectrum] taper must be 'hann' or 'none', got {out['taper']!r}")
        return out

    def output_dir(self, default: str = "out") -> Path:
        sec = self._section("output")
        d = sec.take("dir", _conv_str, default)
        sec.close()
        return Path(d) if d is not None else Path(default)

    def finish(self) -> None:
        for name in self.doc:
            if name not in self._seen:
                self.problems.append(f"unknown section [{name}]")
        if self.problems:
            raise ConfigError(self.problems, path=self.path)
