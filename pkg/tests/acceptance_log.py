"""Shared record of acceptance outcomes, printed at the end of the pytest run."""

RESULTS: dict[int, str] = {}


def report(n: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok
