import pytest

from src.core.errors import ValidationError
from src.utils.helpers import digest_file, digest_payload, fit_loglog


def test_loglog_fit_recovers_a_power_law():
    x = [1e-3, 1e-4, 1e-5]
    slope, intercept = fit_loglog(x, [2.0 * v ** 0.75 for v in x])
    assert slope == pytest.approx(0.75)
    assert intercept == pytest.approx(0.6931471805599453)


def test_loglog_fit_skips_nonpositive_samples():
    slope, _ = fit_loglog([1.0, 2.0, 4.0, 8.0], [0.0, 2.0, 4.0, -8.0])
    assert slope == pytest.approx(1.0)
    with pytest.raises(ValidationError, match="two positive samples"):
        fit_loglog([1.0, 2.0], [0.0, 1.0])


def test_digests_are_stable(tmp_path):
    assert digest_payload({"b": 1, "a": 2}) == digest_payload({"a": 2, "b": 1})
    path = tmp_path / "blob"
    path.write_bytes(b"")
    assert digest_file(str(path)) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
