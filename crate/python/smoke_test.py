"""Smoke test for the nhad_py extension module.

Build and install first, e.g.  maturin develop -m crates/py/Cargo.toml
"""

import json
import math
import tempfile
from pathlib import Path

import nhad_py as nhad


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    fis = nhad.FuzzySystem()
    assert fis.rule_count == 243 and fis.samples == 1001, fis
    assert fis.crisp([0.05] * 5) < 0.1
    assert fis.crisp([0.97, 0.97, 0.95, 0.95, 0.95]) > 0.8
    try:
        fis.crisp([0.1] * 4)
        raise AssertionError("short activation vector accepted")
    except ValueError:
        pass

    assert close(nhad.defuzzify_cog([0.4] * 1001, 0.0, 1.0), 0.5)
    assert close(nhad.connectivity_constant(4, 8, 2, 10, 0.8), 0.32)
    assert close(nhad.reputation_gain([0.5, 0, 0, 0, 0]), 0.125)
    assert close(nhad.significant_difference([0.2, 0.8]), 0.3)
    expected = 0.5 * (math.exp(0.25) - 1) / (math.exp(0.5) - 1) + 0.25
    assert close(nhad.user_healing_cost(0.25, 2, 4), expected)
    assert close(nhad.final_cost(0.8, 0.9), 0.72)

    net = nhad.generate(lambda_=40, anomaly=0.2, seed=3)
    assert net.user_count > 0 and net.flagged_sources > 0, net
    report = nhad.detect(net)
    assert report.converged, report
    metrics = report.metrics()
    assert metrics["accuracy"] >= 0.95, metrics
    assert sum(report.count(b) for b in nhad.BANDS) == net.user_count

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        net.write_csv(tmp)
        again = nhad.detect(str(tmp / "activity.csv"), labels=tmp / "labels.csv")
        assert again.bands() == report.bands()
        again.save(tmp / "report.json")
        saved = json.loads((tmp / "report.json").read_text())
        assert len(saved["verdicts"]) == net.user_count

    summary = nhad.evaluate(runs=2, seed=5, lambda_=30)
    assert [r["seed"] for r in summary["runs"]] == [5, 6]
    try:
        nhad.evaluate(runs=0)
        raise AssertionError("runs=0 accepted")
    except ValueError:
        pass
    try:
        nhad.generate(anomaly=0.6)
        raise AssertionError("anomaly=0.6 accepted")
    except ValueError:
        pass

    print(f"ok: {report!r}, accuracy {metrics['accuracy']:.4f}")


if __name__ == "__main__":
    main()
