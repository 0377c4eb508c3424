"""Order-preserving thread pool map."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

_T = TypeVar("_T")
_R = TypeVar("_R")


def parallel_map(func: Callable[[_T], _R], items: Iterable[_T], threads: int = 1) -> List[_R]:
    """Apply func to every item, on up to `threads` workers; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
