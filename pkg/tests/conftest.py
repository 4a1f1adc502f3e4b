import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ntn_offload.channel import ChannelState

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "detail": detail})
    entry["passed"] = entry["passed"] and rep.passed
    entry["detail"] = detail or entry["detail"]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        verdict = "PASS" if e["passed"] else "FAIL"
        line = f"criterion {number:2d} {verdict}  {e['title']}"
        if e["detail"]:
            line += f"  [{e['detail']}]"
        terminalreporter.write_line(line)


def scalar_chain(g=1.0, G=1.0, q=1.0, p_i=1.0) -> ChannelState:
    """One node, one UAV, one antenna everywhere."""
    g_iu = np.array([[[g]]], complex)
    G_ua = np.array([[[G]]], complex)
    q_ui = np.array([[q]])
    g_eff = np.sqrt(q * p_i) * np.conj(G_ua[0, 0]) * g_iu[0, 0]
    norm2 = float(np.sum(np.abs(g_eff) ** 2))
    sigma = (norm2 + q * norm2 * abs(G) ** 2) / norm2**2
    return ChannelState(beta_iu=np.array([[abs(g) ** 2]]), beta_ua=np.array([abs(G) ** 2]),
                        g_iu=g_iu, G_ua=G_ua, q_ui=q_ui, g_eff=g_eff.reshape(1, 1),
                        sigma_n_sq=np.array([sigma]), omega_ak=np.ones(1), d_ak=np.ones(1),
                        R_ia=np.ones(1), R_ak=np.ones(1), p_i=p_i)
