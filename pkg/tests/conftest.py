import numpy as np
import pytest

from ttround.core import contract_to_dense, horizontal, vertical

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def dense_rel_error(reference: np.ndarray, tt) -> float:
    return float(np.linalg.norm(contract_to_dense(tt) - reference) / np.linalg.norm(reference))


def left_defect(tt) -> float:
    worst = 0.0
    for c in tt.cores[:-1]:
        v = vertical(c)
        worst = max(worst, float(np.linalg.norm(v.T @ v - np.eye(v.shape[1]))))
    return worst


def dense_h_tail(cores) -> np.ndarray:
    """Explicit ``H(X_{k:d})`` for the trailing cores ``cores``."""
    mat = horizontal(cores[-1])
    for c in reversed(cores[:-1]):
        rl, n, rr = c.shape
        # H(X_k X_{k+1:d}) columns: mode-k index fastest
        prod = vertical(c) @ mat  # (rl*n, rest)
        mat = prod.reshape(rl, n * mat.shape[1], order="F")
    return mat


def krp(factors) -> np.ndarray:
    """Column-wise Khatri-Rao product ``factors[-1] (.) ... (.) factors[0]`` with
    the first factor's row index fastest."""
    out = factors[0]
    for f in factors[1:]:
        out = np.einsum("ic,jc->ijc", out, f).reshape(-1, out.shape[1], order="F")
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
