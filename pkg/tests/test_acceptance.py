"""Acceptance criteria, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from qfb.bounds import entropy_gradient, g_function, max_output_entropy
from qfb.channels import identity_channel, random_channel
from qfb.cli import main
from qfb.protocol import noiseless_qubit_spec, run_purified
from qfb.sampling import haar_unitary, random_density_matrix, trial_rng
from qfb.states import matrix_entropy, purify, reduced_matrix
from qfb.verify import check_theorem1_chain, theorem1_fleet, theorem2_fleet


def cli_json(argv, tmp_path):
    path = tmp_path / "out.json"
    code = main(argv + ["-o", str(path)])
    return code, json.loads(path.read_text())


def bound_value(argv, tmp_path):
    code, data = cli_json(["bound"] + argv, tmp_path)
    assert code == 0
    return data


@pytest.mark.criterion(1, "erasure bound (1-p) log2 d")
def test_erasure_bound(tmp_path, request):
    start = time.perf_counter()
    worst = 0.0
    for d, p, expected in [(2, 0.25, 0.75), (4, 0.5, 1.0)]:
        got = bound_value(["--named", "erasure", "--d", str(d), "--p", str(p)], tmp_path)["value_bits"]
        worst = max(worst, abs(got - expected))
    for p in np.round(np.linspace(0, 1, 11), 10):
        got = bound_value(["--named", "erasure", "--d", "2", "--p", repr(float(p))], tmp_path)["value_bits"]
        worst = max(worst, abs(got - (1 - p)))
    elapsed = time.perf_counter() - start
    request.node.criterion_detail = f"max error {worst:.1e}, {elapsed:.1f}s"
    assert worst <= 1e-4
    assert elapsed < 10


@pytest.mark.criterion(2, "noiseless qudit bound log2 d")
def test_noiseless_qudit(tmp_path, request):
    start = time.perf_counter()
    worst = 0.0
    for d in (2, 3, 4, 8):
        got = bound_value(["--named", "identity", "--d", str(d)], tmp_path)["value_bits"]
        worst = max(worst, abs(got - math.log2(d)))
    elapsed = time.perf_counter() - start
    request.node.criterion_detail = f"max error {worst:.1e}, {elapsed:.1f}s"
    assert worst <= 1e-4
    assert elapsed < 10


@pytest.mark.criterion(3, "pure-loss bound converges to g(eta N_S)")
def test_pure_loss(tmp_path, request):
    start = time.perf_counter()
    target = g_function(0.8)
    values = []
    for cutoff in (10, 15, 20):
        data = bound_value(["--named", "pure_loss", "--eta", "0.8", "--ns", "1", "--cutoff", str(cutoff)], tmp_path)
        values.append(data["value_bits"])
    elapsed = time.perf_counter() - start
    request.node.criterion_detail = (f"values {', '.join(f'{v:.7f}' for v in values)} vs g={target:.7f}, "
                                     f"{elapsed:.1f}s")
    assert target == pytest.approx(1.7839369077, abs=1e-9)
    assert values[0] <= values[1] <= values[2]
    assert all(v <= target + 1e-6 for v in values)
    assert abs(values[-1] - target) <= 1e-2
    assert elapsed < 120


@pytest.mark.criterion(4, "lemma fleets, 500 trials, seed 42, dims <= 4")
def test_lemma_fleets(tmp_path, request):
    start = time.perf_counter()
    code, data = cli_json(["verify", "all", "--trials", "500", "--seed", "42", "--dims", "4",
                           "--replay-dir", str(tmp_path)], tmp_path)
    elapsed = time.perf_counter() - start
    results = {r["name"]: r for r in data["results"]}
    worst = min(r["worst_margin"] for r in results.values())
    request.node.criterion_detail = f"worst margin {worst:.2e}, {elapsed:.1f}s"
    assert code == 0
    for name in ("lemma1", "lemma2", "lemma3", "lemma3z"):
        assert results[name]["trials"] == 500
    assert all(r["violations"] == 0 for r in results.values())
    assert worst >= -1e-7
    assert elapsed < 300


@pytest.mark.criterion(5, "single-letter converse chain on 50 random purified protocols")
def test_theorem1_chain(request):
    start = time.perf_counter()
    fleet = theorem1_fleet(50, 5)
    trivial = check_theorem1_chain(run_purified(noiseless_qubit_spec()), max_output_entropy(identity_channel(2)))
    elapsed = time.perf_counter() - start
    links = trivial.details["links"]
    request.node.criterion_detail = (f"worst margin {fleet.worst_margin:.2e}, trivial link (e) "
                                     f"{links['e_end_to_end']:.1e}, {elapsed:.1f}s")
    assert fleet.trials == 50
    assert fleet.violations == 0 and fleet.worst_margin >= -1e-7
    assert trivial.passed
    assert links["e_end_to_end"] == pytest.approx(0.0, abs=1e-7)
    assert elapsed < 300


@pytest.mark.criterion(6, "conditional converse chain on 20 erasure mixture protocols")
def test_theorem2_chain(request):
    start = time.perf_counter()
    fleet = theorem2_fleet(20, 6)
    elapsed = time.perf_counter() - start
    dev = fleet.details["max_marginal_deviation"]
    request.node.criterion_detail = f"worst margin {fleet.worst_margin:.2e}, Z-marginal deviation {dev:.1e}, " \
                                    f"{elapsed:.1f}s"
    assert fleet.trials == 20
    assert fleet.violations == 0 and fleet.worst_margin >= -1e-7
    assert dev <= 1e-8
    assert elapsed < 180


@pytest.mark.criterion(7, "numerical core properties")
def test_core_properties(request):
    start = time.perf_counter()
    grad_err = 0.0
    for t in range(20):
        rng = trial_rng(7, t)
        d_in, d_out = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        ch = random_channel(d_in, d_out, int(rng.integers(2, 4)), rng)
        rho = random_density_matrix([("A", d_in)], rng).entries
        delta = rng.standard_normal((d_in, d_in)) + 1j * rng.standard_normal((d_in, d_in))
        delta = 0.5 * (delta + delta.conj().T)

        def f(m):
            evals = np.linalg.eigvalsh(ch(m))
            return float(-np.sum(evals * np.log2(evals)))

        h = 1e-6
        fd = (f(rho + h * delta) - f(rho - h * delta)) / (2 * h)
        grad_err = max(grad_err, abs(np.trace(entropy_gradient(ch, rho) @ delta).real - fd))
    purify_err = 0.0
    for t in range(200):
        rng = trial_rng(17, t)
        d = int(rng.integers(1, 7))
        rho = random_density_matrix([("A", d)], rng, rank=int(rng.integers(1, d + 1)))
        purify_err = max(purify_err, float(np.max(np.abs(reduced_matrix(purify(rho, "R"), ["A"]) - rho.entries))))
    unitary_err = 0.0
    for t in range(200):
        rng = trial_rng(27, t)
        d = int(rng.integers(2, 7))
        rho = random_density_matrix([("A", d)], rng).entries
        u = haar_unitary(d, rng)
        unitary_err = max(unitary_err, abs(matrix_entropy(u @ rho @ u.conj().T) - matrix_entropy(rho)))
    elapsed = time.perf_counter() - start
    request.node.criterion_detail = (f"gradient {grad_err:.1e}, purification {purify_err:.1e}, "
                                     f"unitary {unitary_err:.1e}, {elapsed:.1f}s")
    assert grad_err <= 1e-4
    assert purify_err <= 1e-10
    assert unitary_err <= 1e-8
    assert elapsed < 60
