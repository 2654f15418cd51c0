import pytest

from shapetex.geometry import CameraModel, ObservationWindow


@pytest.fixture
def square_camera():
    return CameraModel(0.98, ObservationWindow.symmetric(1.0, 1.0))


@pytest.fixture
def wide_camera():
    return CameraModel(0.98, ObservationWindow(-0.69, 0.69, -0.5, 0.5))


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(criterion, ok, detail, seconds, budget)``; ``ok=None`` means N/A."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def add(criterion, ok, detail, seconds, budget):
        if ok is None:
            lines.append(f"N/A   {criterion}: {detail}")
            print(lines[-1])
            return True
        ok = bool(ok) and seconds <= budget
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail} [{seconds:.1f} s, budget {budget:g} s]"
        lines.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
