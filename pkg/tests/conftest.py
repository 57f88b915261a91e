import pytest

from painaffect.synthgen import GeneratorConfig, generate_cohort


@pytest.fixture(scope="session")
def toy_corpus():
    """Four subjects, six windows per recorded state."""
    return generate_cohort(GeneratorConfig(n_subjects=4, female_count=2, windows_per_state=6,
                                           master_seed=11))


@pytest.fixture(scope="session")
def small_corpus():
    """Twenty subjects, four windows per state: enough for leave-subjects-out splits."""
    return generate_cohort(GeneratorConfig(n_subjects=20, female_count=10, windows_per_state=4,
                                           master_seed=5))


@pytest.fixture(scope="session")
def default_cohort():
    """The default 62-subject synthetic cohort (seed 42)."""
    from painaffect.learners import default_threads
    return generate_cohort(GeneratorConfig(), n_jobs=max(2, default_threads()))


@pytest.fixture(scope="session")
def default_features(default_cohort):
    from painaffect.protocol import FeatureStore
    from painaffect.signal import PreprocessConfig
    return FeatureStore(default_cohort, PreprocessConfig())


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
