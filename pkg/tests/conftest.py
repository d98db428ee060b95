import pytest

from simcert.reference import (
    reference_candidates,
    reference_certificates,
    reference_project,
    reference_subsystems,
    reference_topology,
)


@pytest.fixture(scope="session")
def ref_project():
    return reference_project()


@pytest.fixture(scope="session")
def ref_parts():
    """(subsystems, topology, candidates, certificates) of the bundled network."""
    return (
        reference_subsystems(),
        reference_topology(),
        reference_candidates(),
        reference_certificates(),
    )
