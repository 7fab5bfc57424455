# src/utils/parallel.py

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Aplica `func` a cada elemento y devuelve los resultados en el orden de entrada.

    Con threads <= 1 no se crea pool. El orden de reducción nunca depende del
    número de hilos, así que los resultados son idénticos para cualquier valor.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))
