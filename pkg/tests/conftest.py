import numpy as np
import pytest

from archsearch import numerics as nx

FD_STEP = 1e-5
FD_TOL = 1e-4


def fd_max_rel_error(fn, arrays: dict[str, np.ndarray], coords: int | None = None, seed: int = 0,
                     floor: float = 1e-6) -> float:
    """Largest relative gap between autodiff and central differences.

    ``fn`` maps a dict of Vars to a scalar Var.  ``coords`` limits the check to
    that many random coordinates per array (all coordinates when None).
    """
    rng = np.random.default_rng(seed)
    pv = {k: nx.Var(v, requires_grad=True) for k, v in arrays.items()}
    nx.backward(fn(pv))
    worst = 0.0
    for name, arr in arrays.items():
        analytic = pv[name].grad if pv[name].grad is not None else np.zeros_like(arr)
        flat = range(arr.size) if coords is None or coords >= arr.size else rng.choice(arr.size, coords, replace=False)
        for idx in flat:
            pos = np.unravel_index(idx, arr.shape)
            orig = arr[pos]
            arr[pos] = orig + FD_STEP
            with nx.no_grad():
                up = fn({k: nx.Var(v) for k, v in arrays.items()}).item()
            arr[pos] = orig - FD_STEP
            with nx.no_grad():
                down = fn({k: nx.Var(v) for k, v in arrays.items()}).item()
            arr[pos] = orig
            numeric = (up - down) / (2 * FD_STEP)
            a = analytic[pos]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
