"""Pass/fail lines collected by the acceptance suite, printed at session end."""

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    return ok
