import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(
    function: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    progress: bool = False,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Applies function to every item and returns the results in item order.

    Args:
        function (Callable): Work for one item; must not mutate shared state.
        items (Sequence): Inputs.
        workers (int): Thread count; 1 runs inline.
        progress (bool): Show a tqdm bar on stderr.
        desc (str, optional): Label of the progress bar.

    Returns:
        List: function(item) for each item, in the order of items.
    """
    items = list(items)
    bar = tqdm(total=len(items), desc=desc, disable=not progress, leave=False)
    try:
        if workers <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(function(item))
                bar.update(1)
            return results
        logger.debug("Running %d tasks on %d threads", len(items), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = []
            for result in pool.map(function, items):
                results.append(result)
                bar.update(1)
            return results
    finally:
        bar.close()
