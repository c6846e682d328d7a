import mpmath
import pytest

from krpo_lab import tasks


def mp_filter(rewards, q, r, prior_mean, prior_var, dps=50):
    """Straight-line predict/update in 50-digit arithmetic; returns [(x_prior, p_prior, K, x, p)]."""
    with mpmath.workdps(dps):
        q, r = mpmath.mpf(q), mpmath.mpf(r)
        x, p = mpmath.mpf(prior_mean), mpmath.mpf(prior_var)
        out = []
        for obs in rewards:
            x_prior = x
            p_prior = p + q
            k = p_prior / (p_prior + r)
            x = x_prior + k * (mpmath.mpf(obs) - x_prior)
            p = (1 - k) * p_prior
            out.append((x_prior, p_prior, k, x, p))
        return out


@pytest.fixture
def easy_prompt():
    return tasks.generate_prompts(42, "easy", 1)[0]


@pytest.fixture
def normal_prompts():
    return tasks.generate_prompts(7, "normal", 8)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
