# controller/replicator.py

from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, Dict, List

from tqdm import tqdm

from sfc_engine.grid_core import replicate_seed
from utils.logger import logger

# task(replicate, seed) -> report dict with a "status" key
ReplicateTask = Callable[[int, int], Dict[str, Any]]


def run_guarded(task: ReplicateTask, replicate: int, seed: int) -> Dict[str, Any]:
    """Run one replicate; a failure becomes an error record instead of aborting the study."""
    try:
        result = task(replicate, seed)
        result.setdefault("status", "success")
        result.setdefault("replicate", replicate)
        result.setdefault("seed", seed)
        return result
    except Exception as e:
        logger.error(f"[REPLICATE] replicate={replicate} seed={seed} failed: {e}", exc_info=True)
        return {"status": "error", "replicate": replicate, "seed": seed, "error": str(e)}


def run_replicates(task: ReplicateTask, count: int, base_seed: int, workers: int = 1,
                   show_progress: bool = True) -> List[Dict[str, Any]]:
    """
    Run `count` replicates keyed by seed = base_seed XOR replicate and return them
    sorted by replicate index. The result does not depend on `workers`.
    """
    seeds = [replicate_seed(base_seed, r) for r in range(count)]
    logger.info(f"[REPLICATE] Running {count} replicates on {workers} worker(s), base_seed={base_seed}")

    results: List[Dict[str, Any]] = []
    if workers <= 1:
        for r in tqdm(range(count), desc="replicates", disable=not show_progress):
            results.append(run_guarded(task, r, seeds[r]))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_guarded, task, r, seeds[r]): r for r in range(count)}
            with tqdm(total=count, desc="replicates", disable=not show_progress) as bar:
                for future in as_completed(futures):
                    results.append(future.result())
                    bar.update(1)

    results.sort(key=lambda record: record["replicate"])
    failures = sum(1 for record in results if record["status"] != "success")
    if failures:
        logger.warning(f"[REPLICATE] {failures} of {count} replicates failed; see log for details")
    return results
