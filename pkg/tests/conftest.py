import zlib

import pytest

# filled by test_acceptance; echoed after the run so the lines survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def crc32_oracle(data: bytes) -> int:
    """Bitwise reflected CRC-32 (poly 0xEDB88320), no tables, no zlib."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def xor_fold_oracle(data: bytes, n: int) -> int:
    """The running example's checksum loop, written out independently."""
    acc = 0
    for i, byte in enumerate(data[:n]):
        acc ^= (byte << (i % 8)) & 0xFFFF
    return acc


@pytest.fixture(scope="session")
def crc_oracle():
    assert crc32_oracle(b"123456789") == 0xCBF43926
    assert crc32_oracle(b"IEND") == zlib.crc32(b"IEND")
    return crc32_oracle
