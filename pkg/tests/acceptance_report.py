"""Shared pass/fail log for the acceptance suite."""

LINES: dict[int, str] = {}


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    LINES[number] = line
    print(line)
    return ok
