"""Per-criterion outcomes collected by the acceptance tests."""
RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail
