from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from edgechain.contracts import Authority, CodeId, ContractEngine
from edgechain.ledger import Chain, GenesisConfig
from edgechain.registry import DeviceAttributes, Registry

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EDGE = "0x" + "e" * 40
PROXY = "0x" + "f" * 40


def make_system(difficulty_bits: int = 0, reserve: int = 10_000_000, with_chain: bool = True):
    genesis = GenesisConfig(difficulty_bits=difficulty_bits, initial_accounts=((EDGE, reserve),))
    chain = Chain.init_genesis(genesis, EDGE) if with_chain else None
    engine = ContractEngine(EDGE, PROXY, chain, None if with_chain else {EDGE: reserve})
    reg = engine.deploy_contract(CodeId.REGISTRATION, EDGE, Authority.EDGE_SERVER,
                                 {"initial_credit": 100, "max_credit": 100, "learning_window": 20, "proxy": PROXY})
    engine.deploy_contract(CodeId.ALLOCATION, EDGE, Authority.EDGE_SERVER, {"registration": reg.address})
    return chain, engine, Registry(engine)


@pytest.fixture
def system():
    return make_system()


def device(n: int, **kw) -> DeviceAttributes:
    return DeviceAttributes(f"0xdev{n:036d}", **kw)


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE = "test_acceptance.py"
PROPERTIES = "test_properties.py"
CRITERIA: dict[str, tuple[str, str]] = {}
PROPERTY_OUTCOMES: dict[str, str] = {}


def pytest_collection_modifyitems(session, config, items):
    # acceptance last so it can reuse the property suite's outcomes
    items.sort(key=lambda it: it.nodeid.split("::")[0].endswith(ACCEPTANCE))


def pytest_runtest_logreport(report):
    path = report.nodeid.split("::")[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if path.endswith(PROPERTIES):
            PROPERTY_OUTCOMES[report.nodeid] = report.outcome
        elif path.endswith(ACCEPTANCE):
            detail = dict(report.user_properties).get("detail", "")
            CRITERIA[report.nodeid.split("::")[-1]] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA):
        status, detail = CRITERIA[name]
        terminalreporter.write_line(f"{name}: {status}  {detail}")
