import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from walknn.bench import ExperimentConfig, build_context


@pytest.fixture(scope="session")
def desk_ctx():
    """Shared 10k-point / 1000-query context for the quantitative criteria.

    Built once per session; tests that mutate must take a ``.copy()``.
    """
    cfg = ExperimentConfig(
        subsample=10_000,
        query_count=1_000,
        dim=128,
        m=32,
        ef_construction=64,
        ef=64,
        k=10,
        seed=0,
    )
    start = time.perf_counter()
    ctx = build_context(cfg)
    print(f"\n[acceptance] shared 10k index built in {time.perf_counter() - start:.1f}s")
    return ctx
