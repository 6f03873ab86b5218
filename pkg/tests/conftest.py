import sys

import pytest
from hypothesis import settings

settings.register_profile('default', deadline=None, max_examples=40)
settings.load_profile('default')


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get('test_acceptance')
    results = getattr(mod, 'RESULTS', None)
    if not results:
        return
    terminalreporter.section('acceptance criteria')
    for num in sorted(results):
        ok, name, detail = results[num]
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {name}: {detail}")
    passed = sum(ok for ok, _, _ in results.values())
    terminalreporter.write_line(f"{passed}/{len(results)} criteria passed")
