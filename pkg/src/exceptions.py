# src/exceptions.py

from typing import List, Optional


class FlowMatchError(Exception):
    """Raíz de todos los errores del paquete."""


# === ERRORES DE ENTRADA ===

class InputFormatError(FlowMatchError, ValueError):
    """Archivo mal formado; indica la línea y el campo culpables."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"línea {line}")
        if field is not None:
            location.append(f"campo '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class FlowModelError(FlowMatchError, ValueError):
    """Entradas no finitas o instantáneas inválidas."""


class OracleSizeError(FlowMatchError, ValueError):
    """La matriz supera el tamaño permitido por un oráculo exacto."""


class SaddleDomainError(FlowMatchError, ValueError):
    """Componente de rho nula o no finita."""


# === ERRORES NUMÉRICOS (código de salida 2) ===

class NumericalError(FlowMatchError):
    """Fallo numérico de un algoritmo."""


class BpInitError(NumericalError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residuo {residual:.3e})")


class BpConvergenceError(NumericalError):
    """BP no converge; conserva el último estado y la traza de residuos."""

    def __init__(self, message: str, state=None, trace: Optional[List[float]] = None):
        self.state = state
        self.trace = list(trace or [])
        super().__init__(message)


class SaddleConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residuo {residual:.3e})")


class SaddleSingularError(NumericalError):
    """El hessiano no es definido positivo o su determinante no es finito."""


class PermanentPrecisionError(NumericalError):
    """La suma de Ryser perdió toda la precisión."""


class McmcInfeasibleError(NumericalError):
    """No existe ninguna permutación de peso positivo."""


class LearningError(NumericalError):
    """Todos los puntos del barrido fallaron."""
