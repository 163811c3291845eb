"""Self-contained oracle and invariant suites behind the check command.

Each suite runs a handful of numbered checks and returns one result per
check; the CLI prints them one per line and fails the process if any check
fails. Everything here uses only library code (the quadratic closed-form
expansion and the finite-difference oracle are library operations); the
nested-loop references stay in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adaup import AdaUpWeights, adaup_forward, transposed_conv_x2
from .msfm import MsfmWeights, conv_branch, msfm_forward, ssm_branch, transformer_branch
from .qssm import (
    DIRECTIONS,
    BurstFeatures,
    QssmBlockWeights,
    fuse_base,
    merge_currents,
    qssm_block,
    qssm_scan_direction,
    query_prenorm,
)
from .ssm import (
    DiscreteSsm,
    SsmParams,
    closed_form_scan,
    finite_diff_grad,
    selective_scan,
    selective_scan_backward,
    zoh_discretize,
)

SUITES = ("ssm", "qssm", "adaup", "msfm", "grad")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _random_params(rng, length=None, c_feat=None, d_state=None) -> SsmParams:
    length = length or int(rng.integers(1, 65))
    c_feat = c_feat or int(rng.integers(1, 9))
    d_state = d_state or int(rng.integers(1, 17))
    return SsmParams(
        A=-rng.uniform(0.1, 5.0, size=(c_feat, d_state)),
        B_seq=rng.normal(size=(length, c_feat, d_state)),
        C_out=rng.normal(size=(c_feat, d_state)),
        D_skip=rng.normal(size=c_feat),
        Delta_seq=rng.uniform(0.01, 2.0, size=(length, c_feat)),
    )


def scan_oracle_equivalence(
    n_cases: int = 50, seed: int = 0, fault_bbar_sign: bool = False
) -> tuple[float, float]:
    """Max relative error between the scan and the closed-form expansion.

    ``fault_bbar_sign`` flips the sign of the discretized input factor
    before the scan; it exists only so the check harness can be shown to
    catch an injected defect.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        p = _random_params(rng)
        x = rng.normal(size=(p.B_seq.shape[0], p.A.shape[0]))
        disc = zoh_discretize(p.A, p.B_seq, p.Delta_seq)
        if fault_bbar_sign:
            disc = DiscreteSsm(Abar_seq=disc.Abar_seq, Bbar_seq=-disc.Bbar_seq)
        y_scan, _ = selective_scan(disc, p.C_out, p.D_skip, x)
        y_cf = closed_form_scan(p, x)
        scale = max(np.max(np.abs(y_cf)), 1.0)
        worst = max(worst, float(np.max(np.abs(y_scan - y_cf)) / scale))
    return worst, 1e-10


def suite_ssm(seed: int = 0, n_cases: int = 50, fault_bbar_sign: bool = False) -> list[CheckResult]:
    results = []

    disc = zoh_discretize(np.array([[-1.0]]), np.array([[[1.0]]]), np.array([[math.log(2.0)]]))
    err = max(abs(disc.Abar_seq[0, 0, 0] - 0.5), abs(disc.Bbar_seq[0, 0, 0] - 0.5))
    results.append(CheckResult("zoh ln2 scalar case", err < 1e-12, f"max err {err:.2e}"))

    rng = np.random.default_rng(seed)
    a = -rng.uniform(0.1, 5.0, size=(4, 6))
    b = rng.normal(size=(3, 4, 6))
    d = zoh_discretize(a, b, np.full((3, 4), 1e-6))
    err_a = float(np.max(np.abs(d.Abar_seq - (1.0 + 1e-6 * a))))
    err_b = float(np.max(np.abs(d.Bbar_seq - 1e-6 * b))) / float(np.max(np.abs(b)))
    results.append(
        CheckResult("zoh first-order limit", err_a <= 1e-9 and err_b <= 1e-9, f"abar {err_a:.2e}, bbar {err_b:.2e}")
    )

    worst, tol = scan_oracle_equivalence(n_cases=n_cases, seed=seed + 1, fault_bbar_sign=fault_bbar_sign)
    results.append(
        CheckResult(f"scan vs closed-form oracle ({n_cases} draws)", worst <= tol, f"max rel err {worst:.2e}")
    )

    p = _random_params(rng, length=24, c_feat=3, d_state=4)
    x = rng.normal(size=(24, 3))
    disc = zoh_discretize(p.A, p.B_seq, p.Delta_seq)
    y1, _ = selective_scan(disc, p.C_out, p.D_skip, x)
    x2 = x.copy()
    x2[15:] += 1.0
    y2, _ = selective_scan(disc, p.C_out, p.D_skip, x2)
    results.append(CheckResult("causality (prefix unchanged)", bool(np.array_equal(y1[:15], y2[:15]))))

    ok = True
    detail = ""
    for _ in range(5):
        p = _random_params(rng)
        m = 2.0
        x = rng.uniform(-m, m, size=(p.B_seq.shape[0], p.A.shape[0]))
        disc = zoh_discretize(p.A, p.B_seq, p.Delta_seq)
        _, _, states = selective_scan(disc, p.C_out, p.D_skip, x, return_states=True)
        bound = m * np.max(np.abs(disc.Bbar_seq)) / (1.0 - np.max(disc.Abar_seq))
        if np.max(np.abs(states)) > bound + 1e-12:
            ok = False
            detail = f"state {np.max(np.abs(states)):.3e} exceeds bound {bound:.3e}"
    results.append(CheckResult("bounded state (5 draws)", ok, detail))
    return results


def suite_qssm(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)

    w0 = QssmBlockWeights.zeros(4, 6, 3)
    base = rng.normal(size=(6, 5, 7))
    currents = rng.normal(size=(3, 6, 5, 7))
    out = qssm_block(BurstFeatures(base, currents), w0)
    results.append(CheckResult("residual identity (zero weights)", bool(np.array_equal(out, base))))

    w = QssmBlockWeights.random(rng, 3, 4, 3)
    nb = rng.normal(size=(4, 5, 6))
    mg = rng.normal(size=(4, 5, 6))
    ok = True
    for direction, mirror, axis in (("row-bwd", "row-fwd", 2), ("col-bwd", "col-fwd", 1)):
        a = qssm_scan_direction(nb, mg, w, direction)
        b = np.flip(qssm_scan_direction(np.flip(nb, axis), np.flip(mg, axis), w, mirror), axis)
        ok = ok and bool(np.array_equal(a, b))
    results.append(CheckResult("direction mirror symmetry (bitwise)", ok))

    parts = [qssm_scan_direction(nb, mg, w, d) for d in DIRECTIONS]
    total = parts[0] + parts[1] + parts[2] + parts[3]
    acc = qssm_scan_direction(nb, mg, w, DIRECTIONS[0])
    for d in DIRECTIONS[1:]:
        acc = acc + qssm_scan_direction(nb, mg, w, d)
    results.append(CheckResult("four-direction sum decomposition", bool(np.array_equal(total, acc))))

    wg = QssmBlockWeights.zeros(2, 2, 2)
    wg.delta_weight = np.eye(2)
    wg.b_bias[:] = 1.0
    wg.x_weight = np.eye(2)
    wg.c_readout[:] = 1.0
    gate_base = np.where(np.isin(np.arange(10), [2, 6]), 20.0, -20.0)[None, :].repeat(2, axis=0)[:, None, :]
    drive = rng.normal(size=(2, 1, 10))
    y0 = qssm_scan_direction(gate_base, drive, wg, "row-fwd")
    scale = float(np.max(np.abs(y0)))
    ok = True
    for j in (0, 4, 8):
        pert = drive.copy()
        pert[:, 0, j] += 3.0
        y1 = qssm_scan_direction(gate_base, pert, wg, "row-fwd")
        ok = ok and float(np.max(np.abs(y1 - y0))) <= 1e-6 * scale
    pert = drive.copy()
    pert[:, 0, 6] += 3.0
    y2 = qssm_scan_direction(gate_base, pert, wg, "row-fwd")
    ok = ok and float(np.max(np.abs(y2 - y0))) > 1e-3 * scale
    results.append(CheckResult("query gating (closed positions invisible)", ok))

    merged = merge_currents(currents, QssmBlockWeights.random(rng, 4, 6, 3))
    fused = fuse_base(base, currents, QssmBlockWeights.random(rng, 4, 6, 3))
    results.append(
        CheckResult(
            "fuse/merge shape contract",
            merged.shape == base.shape and fused.shape == base.shape and bool(np.all(np.isfinite(query_prenorm(fused)))),
        )
    )
    return results


def suite_adaup(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)
    weights = AdaUpWeights.random(rng, 4, 2)
    x = rng.normal(size=(4, 6, 5))
    got = adaup_forward(x, weights, 4, override="ones")
    plain = transposed_conv_x2(transposed_conv_x2(x, weights.stages[0].kernel), weights.stages[1].kernel)
    err = float(np.max(np.abs(got - plain)))
    results.append(CheckResult("identity reduction (L=L1=1)", err <= 1e-12, f"max err {err:.2e}"))

    ok = all(
        adaup_forward(rng.normal(size=(3, h, w)), AdaUpWeights.random(rng, 3, 1), 2).shape == (3, 2 * h, 2 * w)
        for h, w in ((1, 1), (3, 8), (16, 5))
    )
    results.append(CheckResult("exact spatial doubling", ok))

    z = adaup_forward(np.zeros((4, 4, 4)), weights, 4)
    results.append(CheckResult("zero input, zero output", bool(np.all(z == 0))))
    return results


def suite_msfm(seed: int = 0) -> list[CheckResult]:
    results = []
    rng = np.random.default_rng(seed)
    w = MsfmWeights.random(rng, 4, 3)
    x = rng.normal(size=(4, 5, 6))

    w.w1, w.w2, w.w3 = 1.0, 0.0, 0.0
    results.append(CheckResult("conv-only gating (w2=w3=0)", bool(np.array_equal(msfm_forward(x, w), conv_branch(x, w)))))

    w.w1, w.w2, w.w3 = 0.8, -1.2, 1.5
    recomposed = w.w1 * conv_branch(x, w) + w.w2 * ssm_branch(x, w) + w.w3 * transformer_branch(x, w)
    results.append(CheckResult("recomposed three-branch sum (bitwise)", bool(np.array_equal(msfm_forward(x, w), recomposed))))

    y = msfm_forward(x, w)
    w.w1, w.w2, w.w3 = 2 * 0.8, 2 * -1.2, 2 * 1.5
    results.append(CheckResult("degree-1 homogeneity (alpha = 2)", bool(np.array_equal(msfm_forward(x, w), 2 * y))))

    results.append(CheckResult("shape preservation", msfm_forward(rng.normal(size=(4, 3, 9)), w).shape == (4, 3, 9)))
    return results


def suite_grad(seed: int = 0, n_cases: int = 10) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        p = _random_params(rng, length=12, c_feat=3, d_state=4)
        x = rng.normal(size=(12, 3))
        gy = rng.normal(size=(12, 3))
        disc = zoh_discretize(p.A, p.B_seq, p.Delta_seq)
        grads = selective_scan_backward(disc, p.C_out, p.D_skip, x, gy)

        def loss_wrt(name):
            def f(arr):
                d = DiscreteSsm(
                    Abar_seq=arr if name == "abar" else disc.Abar_seq,
                    Bbar_seq=arr if name == "bbar" else disc.Bbar_seq,
                )
                y, _ = selective_scan(d, arr if name == "c" else p.C_out, arr if name == "d" else p.D_skip, arr if name == "x" else x)
                return float((y * gy).sum())

            return f

        for name, arr, analytic in (
            ("abar", disc.Abar_seq, grads.d_Abar_seq),
            ("bbar", disc.Bbar_seq, grads.d_Bbar_seq),
            ("c", p.C_out, grads.d_C_out),
            ("d", p.D_skip, grads.d_D_skip),
            ("x", x, grads.d_x_seq),
        ):
            fd = finite_diff_grad(loss_wrt(name), arr.copy(), eps=1e-6)
            scale = max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, float(np.max(np.abs(analytic - fd)) / scale))
    return [
        CheckResult(
            f"analytic backward vs central differences ({n_cases} cases)",
            worst <= 1e-5,
            f"max rel err {worst:.2e}",
        )
    ]


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "ssm":
        return suite_ssm(seed)
    if name == "qssm":
        return suite_qssm(seed)
    if name == "adaup":
        return suite_adaup(seed)
    if name == "msfm":
        return suite_msfm(seed)
    if name == "grad":
        return suite_grad(seed)
    if name == "all":
        out = []
        for s in SUITES:
            out.extend(run_suite(s, seed))
        return out
    raise ValueError(f"unknown suite {name!r}, expected one of {SUITES + ('all',)}")
