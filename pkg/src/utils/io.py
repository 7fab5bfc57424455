# src/utils/io.py

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Tuple

import numpy as np
from pydantic import ValidationError

from src import config
from src.exceptions import FlowModelError, InputFormatError
from src.models.beliefs import BeliefState
from src.models.snapshot import SnapshotPair, WeightMatrix
from src.schemas.flow import SnapshotTruth
from src.schemas.learning import Method, SweepResult


def format_float(value: float) -> str:
    """17 cifras significativas: ida y vuelta sin pérdida para doubles."""
    return format(float(value), config.FLOAT_FORMAT)


# === JSON CON 17 CIFRAS ===

def _to_json(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return format_float(value)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return json.dumps(obj.value)
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist())
    if isinstance(obj, dict):
        items = ", ".join(f"{_to_json(str(getattr(k, 'value', k)))}: {_to_json(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_to_json(v) for v in obj) + "]"
    raise TypeError(f"Tipo no serializable: {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return _to_json(obj) + "\n"


def _load_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"JSON inválido: {exc.msg}", line=exc.lineno) from exc


# === INSTANTÁNEAS (CSV frame,id,x0[,x1,x2]) ===

def validate_snapshot_row(row: Dict[str, str], dims: int) -> Tuple[bool, Optional[str], str]:
    """Valida una fila del CSV; retorna (válida, campo culpable, mensaje)."""
    if row.get("frame") not in ("0", "1"):
        return False, "frame", "frame debe ser 0 o 1"
    try:
        ident = int(row.get("id", ""))
        if ident < 0:
            return False, "id", "id no puede ser negativo"
    except (ValueError, TypeError):
        return False, "id", "id debe ser un entero"
    for axis in range(dims):
        field = f"x{axis}"
        try:
            value = float(row.get(field, ""))
        except (ValueError, TypeError):
            return False, field, f"{field} debe ser un número válido"
        if not math.isfinite(value):
            return False, field, f"{field} debe ser finito"
    return True, None, ""


def write_snapshots(snap: SnapshotPair, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["frame", "id"] + [f"x{a}" for a in range(snap.dims)])
    for frame, positions in ((0, snap.x), (1, snap.y)):
        for ident, point in enumerate(positions):
            writer.writerow([frame, ident] + [format_float(v) for v in point])


def read_snapshots(stream: TextIO, truth: Optional[SnapshotTruth] = None) -> SnapshotPair:
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    expected_prefix = ["frame", "id"]
    if header[:2] != expected_prefix or len(header) < 3:
        raise InputFormatError("Cabecera esperada frame,id,x0[,x1,x2]", line=1)
    axes = header[2:]
    if axes != [f"x{a}" for a in range(len(axes))] or len(axes) > 3:
        raise InputFormatError("Columnas de coordenadas deben ser x0[,x1,x2]", line=1, field=",".join(axes))
    dims = len(axes)
    frames: Tuple[Dict[int, List[float]], Dict[int, List[float]]] = ({}, {})
    for row_num, row in enumerate(reader, start=2):
        is_valid, field, message = validate_snapshot_row(row, dims)
        if not is_valid:
            raise InputFormatError(message, line=row_num, field=field)
        frame = frames[int(row["frame"])]
        ident = int(row["id"])
        if ident in frame:
            raise InputFormatError(f"id {ident} repetido en el fotograma", line=row_num, field="id")
        frame[ident] = [float(row[a]) for a in axes]
    first, second = frames
    if len(first) != len(second) or len(first) == 0:
        raise InputFormatError(f"Los fotogramas tienen {len(first)} y {len(second)} partículas")
    for frame in frames:
        if sorted(frame) != list(range(len(frame))):
            raise InputFormatError("Los id de cada fotograma deben ser 0..N-1", field="id")
    x = np.array([first[k] for k in range(len(first))])
    y = np.array([second[k] for k in range(len(second))])
    try:
        return SnapshotPair(x=x, y=y, truth=truth)
    except FlowModelError as exc:
        raise InputFormatError(str(exc)) from exc


def write_truth(truth: SnapshotTruth, stream: TextIO) -> None:
    stream.write(dumps_json(truth.model_dump()))


def read_truth(path: Path) -> SnapshotTruth:
    try:
        return SnapshotTruth.model_validate(_load_json(path))
    except ValidationError as exc:
        error = exc.errors()[0]
        raise InputFormatError(error["msg"], field=".".join(str(p) for p in error["loc"])) from exc


# === MATRIZ DE PESOS (n y luego n filas de log-pesos) ===

def write_matrix(w: WeightMatrix, stream: TextIO) -> None:
    stream.write(f"{w.n}\n")
    for row in w.log_entries:
        stream.write(" ".join(format_float(v) for v in row) + "\n")


def read_matrix(stream: TextIO) -> WeightMatrix:
    lines = [line for line in stream.read().splitlines()]
    if not lines:
        raise InputFormatError("Archivo de matriz vacío", line=1)
    try:
        n = int(lines[0].strip())
    except ValueError as exc:
        raise InputFormatError("La primera línea debe ser el entero n", line=1, field="n") from exc
    if n < 1:
        raise InputFormatError("n debe ser >= 1", line=1, field="n")
    if len(lines) - 1 < n:
        raise InputFormatError(f"Se esperaban {n} filas y hay {len(lines) - 1}", line=len(lines))
    log_entries = np.empty((n, n))
    for i in range(n):
        tokens = lines[i + 1].split()
        if len(tokens) != n:
            raise InputFormatError(f"Se esperaban {n} valores y hay {len(tokens)}", line=i + 2)
        for j, token in enumerate(tokens):
            try:
                log_entries[i, j] = float(token)
            except ValueError as exc:
                raise InputFormatError(f"Valor no numérico '{token}'", line=i + 2, field=f"columna {j}") from exc
    if any(line.strip() for line in lines[n + 1 :]):
        raise InputFormatError("Contenido extra tras la matriz", line=n + 2)
    try:
        return WeightMatrix(log_entries)
    except FlowModelError as exc:
        raise InputFormatError(str(exc)) from exc


def is_snapshot_file(path: Path) -> bool:
    with open(path, encoding="utf-8") as handle:
        return handle.readline().strip().startswith("frame")


# === CREENCIAS (JSON) ===

def belief_to_dict(state: BeliefState) -> Dict[str, Any]:
    return {
        "f_bp": state.f_bp,
        "beta": state.beta,
        "residual": state.residual,
        "iterations": state.iterations,
        "log_u": state.log_u,
        "log_v": state.log_v,
        "clamped": state.clamped,
    }


def belief_from_dict(data: Dict[str, Any]) -> BeliefState:
    try:
        beta = np.array(data["beta"], dtype=float)
        n = beta.shape[0]
        if beta.ndim != 2 or beta.shape != (n, n):
            raise InputFormatError("beta debe ser una matriz cuadrada", field="beta")
        return BeliefState(
            beta=beta,
            log_u=np.array(data.get("log_u", np.zeros(n)), dtype=float),
            log_v=np.array(data.get("log_v", np.zeros(n)), dtype=float),
            f_bp=float(data["f_bp"]),
            residual=float(data.get("residual", 0.0)),
            iterations=int(data.get("iterations", 0)),
            clamped=bool(data.get("clamped", False)),
        )
    except KeyError as exc:
        raise InputFormatError("Falta un campo obligatorio", field=str(exc.args[0])) from exc
    except IndexError as exc:
        raise InputFormatError("beta debe ser una matriz cuadrada", field="beta") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputFormatError):
            raise
        raise InputFormatError(f"Creencias inválidas: {exc}") from exc


def read_beliefs(path: Path) -> BeliefState:
    return belief_from_dict(_load_json(path))


# === BARRIDOS (CSV) ===

SWEEP_COLUMNS = {
    "lnZ_bp": Method.bp,
    "lnZ_sp": Method.bp_sp,
    "lnZ_sp4": Method.bp_sp4,
    "lnZ_mcmc": Method.mcmc,
    "lnZ_exact": Method.exact,
}
SWEEP_TIMINGS = ("bp", "sp", "mcmc", "exact")


def write_sweep_csv(result: SweepResult, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(
        ["param"] + list(SWEEP_COLUMNS) + ["ratio_g4"] + [f"seconds_{name}" for name in SWEEP_TIMINGS]
    )

    def cell(value: Optional[float]) -> str:
        return "nan" if value is None else format_float(value)

    for row in result.rows:
        writer.writerow(
            [format_float(row.param)]
            + [cell(row.ln_z_per_particle.get(method)) for method in SWEEP_COLUMNS.values()]
            + [cell(row.ratio_g4)]
            + [cell(row.seconds.get(name)) for name in SWEEP_TIMINGS]
        )
