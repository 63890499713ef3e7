"""
IO Module
Run manifests, key-value config files and result writers
"""
import csv
import datetime
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

from flow.errors import OutputExistsError


MANIFEST_NAME = 'manifest.txt'
RESULTS_COLUMNS = ['alpha', 'beta', 'kappa', 'norm_kind', 'error', 'excluded_flag']
KERNEL_DISTANCE_COLUMNS = ['alpha', 's', 'T', 'dim', 'value', 't_star', 'err_bound']
PLOT_COLUMNS = ['norm_kind', 'alpha', 'log2ma', 'logerr']
DIAGNOSTICS_COLUMNS = ['t', 'energy_kin', 'energy_mag', 'div_residual', 'picard_iters']


def format_value(value: Any) -> str:
    """Text form used in manifests and CSVs; floats keep 17 significant digits"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return format(value, '.17g')
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(v) for v in value)
    return str(value)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class Manifest:
    """
    Everything needed to reproduce a run

    Attributes:
        command: Subcommand name
        parameters: Ordered effective parameters, stored as text
        seed: RNG seed of the initial data
        tool_version: flow package version
        timestamp: Run start time
        input_hashes: Input file path -> SHA-256 hex digest
    """
    command: str
    parameters: Dict[str, str] = field(default_factory=dict)
    seed: int = 0
    tool_version: str = ''
    timestamp: str = ''
    input_hashes: Dict[str, str] = field(default_factory=dict)

    def set(self, key: str, value: Any):
        self.parameters[key] = format_value(value)

    def add_input(self, path: str):
        self.input_hashes[os.path.abspath(path)] = file_sha256(path)

    def to_text(self) -> str:
        lines = [
            f"command = {self.command}",
            f"seed = {self.seed}",
            f"tool_version = {self.tool_version}",
            f"timestamp = {self.timestamp}",
        ]
        for key, value in self.parameters.items():
            lines.append(f"param.{key} = {value}")
        for path, digest in self.input_hashes.items():
            lines.append(f"input.{path} = {digest}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        manifest = cls(command='')
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            key, sep, value = line.partition(' = ')
            if not sep:
                raise ValueError(f"manifest line {number} is not 'key = value': {line!r}")
            if key == 'command':
                manifest.command = value
            elif key == 'seed':
                manifest.seed = int(value)
            elif key == 'tool_version':
                manifest.tool_version = value
            elif key == 'timestamp':
                manifest.timestamp = value
            elif key.startswith('param.'):
                manifest.parameters[key[len('param.'):]] = value
            elif key.startswith('input.'):
                manifest.input_hashes[key[len('input.'):]] = value
            else:
                raise ValueError(f"unknown manifest key {key!r} on line {number}")
        return manifest


def load_config(path: str) -> Dict[str, str]:
    """
    Read a flat key-value config file

    Lines are 'key = value'; '#' starts a comment. Keys may be dotted
    (grid.n, data.preset).

    Returns:
        Ordered dict of key -> raw text value
    """
    values = {}
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep or not key.strip():
                raise ValueError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
            values[key.strip()] = value.strip()
    return values


def atomic_write_text(path: str, text: str) -> str:
    """Write via a temp file in the same directory and rename over path"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return os.path.abspath(path)


def prepare_output_dir(out_dir: str, force: bool = False) -> str:
    """
    Create out_dir; refuse to reuse one holding a previous run unless force

    Raises:
        OutputExistsError: out_dir already has a manifest and force is False
    """
    if os.path.exists(os.path.join(out_dir, MANIFEST_NAME)) and not force:
        raise OutputExistsError(f"{out_dir} already holds results; pass --force to overwrite")
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buffer.getvalue()


def write_csv(path: str, rows: Iterable[dict], columns: Sequence[str]) -> str:
    return atomic_write_text(path, csv_text(rows, columns))


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def _json_safe(value: Any) -> Any:
    """Non-finite floats become "inf" / "-inf" / "nan" strings"""
    if isinstance(value, float) and not math.isfinite(value):
        return format_value(value) if not math.isnan(value) else "nan"
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_json(path: str, payload: Any) -> str:
    return atomic_write_text(path, json.dumps(_json_safe(payload), indent=2, allow_nan=False) + "\n")


def results_rows(error_rows: Iterable[dict]) -> List[dict]:
    """Map sweep error rows onto the results CSV columns"""
    out = []
    for row in error_rows:
        out.append({
            'alpha': row['alpha'],
            'beta': row.get('beta'),
            'kappa': row.get('kappa'),
            'norm_kind': row['norm_kind'],
            'error': row['error'],
            'excluded_flag': bool(row.get('excluded', False)),
        })
    return out


def plot_rows(error_rows: Iterable[dict]) -> List[dict]:
    """log(2 - alpha) and log(error) for every usable point"""
    out = []
    for row in error_rows:
        alpha, error = float(row['alpha']), float(row['error'])
        if alpha < 2.0 and error > 0:
            out.append({
                'norm_kind': row['norm_kind'],
                'alpha': alpha,
                'log2ma': math.log(2.0 - alpha),
                'logerr': math.log(error),
            })
    return out


def write_results(report: Dict[str, Any], out_dir: str) -> List[str]:
    """
    Write a sweep report

    Args:
        report: dict with optional keys: error_rows (results.csv, plot.csv),
            fits (fit.json, list of dicts), extra (merged into fit.json),
            diagnostics (name -> per-step rows, written under diagnostics/)
        out_dir: Prepared output directory

    Returns:
        List of written paths
    """
    error_rows = list(report.get('error_rows', []))
    written = [
        write_csv(os.path.join(out_dir, 'results.csv'), results_rows(error_rows), RESULTS_COLUMNS),
        write_csv(os.path.join(out_dir, 'plot.csv'), plot_rows(error_rows), PLOT_COLUMNS),
    ]
    payload = {'fits': list(report.get('fits', []))}
    payload.update(report.get('extra', {}))
    written.append(write_json(os.path.join(out_dir, 'fit.json'), payload))
    for name, rows in report.get('diagnostics', {}).items():
        path = os.path.join(out_dir, 'diagnostics', f"{name}.csv")
        written.append(write_csv(path, rows, DIAGNOSTICS_COLUMNS))
    return written


def write_manifest(manifest: Manifest, out_dir: str) -> str:
    return atomic_write_text(os.path.join(out_dir, MANIFEST_NAME), manifest.to_text())


def now_stamp() -> str:
    return datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
