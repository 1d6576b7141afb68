from __future__ import annotations

from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True)
settings.load_profile("repo")

# criterion id -> list of (label, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c)):
        rows = ACCEPTANCE[cid]
        ok = all(passed for _, passed, _ in rows)
        detail = "; ".join(f"{label}: {d}" for label, _, d in rows)
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
