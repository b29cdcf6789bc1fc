import pytest

from support import FIXTURES, load_fixture_text


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def fig2_text():
    return load_fixture_text("fig2.ir")


def _universe(name):
    from crossinspect.ir import parse_ir
    return parse_ir(load_fixture_text(name))


@pytest.fixture()
def fig2_universe(fig2_text):
    from crossinspect.ir import parse_ir
    return parse_ir(fig2_text)


@pytest.fixture()
def fig5_universe():
    return _universe("fig5.ir")


@pytest.fixture()
def fig7_universe():
    return _universe("fig7.ir")


@pytest.fixture()
def fig9_universe():
    return _universe("fig9.ir")


@pytest.fixture()
def fig10_universe():
    return _universe("fig10.ir")


@pytest.fixture()
def fig11_universe():
    return _universe("fig11.ir")
