"""Property suite behind the ``verify`` command.

Each check returns ``(passed, detail)``. The suite is sized to finish in
well under a minute; the pytest acceptance module runs the heavier versions.
"""

import time

import numpy as np

from . import adapter as adp
from .analysis import eckart_young_gap, expressivity_bounds, interaction_strength, rank_report
from .errors import ParseError
from .expansion import VARIANTS, compose_delta_w, delta_w_sum_oracle, expanded_dim, n_pairs, pair_order
from .gradcheck import max_rel_error
from .numerics import numeric_rank, rel_frobenius, svd
from .reference import lora_backward, lora_forward


def check_pair_order_roundtrip(rng):
    for r in range(1, 65):
        order = pair_order(r)
        if order.dim != expanded_dim(r):
            return False, f"r={r}: dim {order.dim}"
        for k in range(order.dim):
            if order.index(order.descriptor(k)) != k:
                return False, f"r={r}: descriptor {k} does not round-trip"
    return True, "r = 1..64"


def check_factorization(rng):
    worst = 0.0
    for r in (1, 2, 4, 8):
        for _ in range(25):
            m, n = rng.choice([4, 16, 64], size=2)
            b = rng.standard_normal((m, r))
            a = rng.standard_normal((r, n))
            h = rng.standard_normal(n_pairs(r))
            oracle = delta_w_sum_oracle(b, a, h)
            worst = max(worst, rel_frobenius(compose_delta_w(b, a, h), oracle))
    return worst < 1e-12, f"max rel discrepancy {worst:.2e}"


def check_lora_degeneracy(rng):
    worst_y = worst_g = 0.0
    for _ in range(20):
        m, n, r, batch = 12, 10, 3, 5
        cfg = adp.AdapterConfig(r=r, variant="lora", alpha=2.0)
        ad = adp.random_adapter(cfg, m, n, rng)
        w0 = rng.standard_normal((m, n))
        x = rng.standard_normal((n, batch))
        up = rng.standard_normal((m, batch))
        ref_y = lora_forward(w0, ad.b, ad.a, x, cfg.scale)
        worst_y = max(worst_y, rel_frobenius(adp.forward(ad, w0, x), ref_y))
        ref_db, ref_da = lora_backward(ad.b, ad.a, x, up, cfg.scale)
        g = adp.backward(ad, w0, x, up)
        worst_g = max(worst_g, rel_frobenius(g.d_b, ref_db), rel_frobenius(g.d_a, ref_da))
    return worst_y < 1e-12 and worst_g < 1e-10, f"forward {worst_y:.2e}, grads {worst_g:.2e}"


def check_rank_bounds(rng):
    lifted = 0
    for seed in range(100):
        gen = np.random.default_rng(seed)
        ad = adp.random_adapter(adp.AdapterConfig(r=2), 16, 16, gen)
        rep = rank_report(ad)
        lifted += rep.numeric_rank_delta_w > 2
    return lifted >= 95, f"rank > r on {lifted}/100 seeds; bound never exceeded"


def check_gradients(rng):
    worst = 0.0
    for variant in VARIANTS:
        for r in (1, 2, 4):
            cfg = adp.AdapterConfig(r=r, variant=variant)
            ad = adp.random_adapter(cfg, 8, 8, rng)
            w0 = rng.standard_normal((8, 8))
            x = rng.standard_normal((8, 3))
            up = rng.standard_normal((8, 3))
            worst = max(worst, max_rel_error(ad, w0, x, up))
    return worst < 1e-6, f"max rel error {worst:.2e}"


def check_merge(rng):
    worst = 0.0
    for variant in VARIANTS:
        ad = adp.random_adapter(adp.AdapterConfig(r=3, variant=variant), 10, 7, rng)
        w0 = rng.standard_normal((10, 7))
        x = rng.standard_normal((7, 4))
        y = adp.forward(ad, w0, x)
        worst = max(worst, float(np.linalg.norm(adp.merge(ad, w0) @ x - y) / np.linalg.norm(y)))
    return worst < 1e-11, f"max rel gap {worst:.2e}"


def check_svd(rng):
    worst_rec = worst_orth = 0.0
    for shape in ((8, 8), (12, 5), (5, 12), (32, 32)):
        for _ in range(10):
            m = rng.standard_normal(shape)
            dec = svd(m)
            worst_rec = max(worst_rec, float(np.linalg.norm(dec.reconstruct() - m) / np.linalg.norm(m)))
            for q in (dec.left_vectors, dec.right_vectors):
                worst_orth = max(worst_orth, float(np.abs(q.T @ q - np.eye(q.shape[1])).max()))
    ok = worst_rec < 1e-9 and worst_orth < 1e-9
    return ok, f"reconstruction {worst_rec:.2e}, orthonormality {worst_orth:.2e}"


def check_eckart_young(rng):
    for _ in range(10):
        w = rng.standard_normal((32, 32))
        for k in (1, 4, 14):
            eckart_young_gap(w, k)
        for r in (1, 2, 4, 8):
            b = expressivity_bounds(w, r)
            if b.pera_floor > b.lora_floor:
                return False, f"pera floor above lora floor at r={r}"
    return True, "truncation error equals sigma_(k+1) for k in {1, 4, 14}"


def check_interaction_oracle(rng):
    q = rng.standard_normal((8, 8))
    q = 0.5 * (q + q.T)
    samples = [rng.standard_normal(8) for _ in range(4)]
    s = interaction_strength(lambda h: 0.5 * h @ q @ h, samples)
    err = float(np.abs(s.s - np.abs(q)).max())
    return err < 1e-4, f"max |S - |Q|| = {err:.2e}"


def check_param_counts(rng):
    for r in range(1, 65):
        for m, n in ((64, 64), (128, 32), (7, 300)):
            full = adp.param_count(adp.AdapterConfig(r=r), m, n)
            lora = adp.param_count(adp.AdapterConfig(r=r, variant="lora"), m, n)
            if full.trainable != m * r + r * n + r + r * (r - 1) // 2:
                return False, f"full count wrong at r={r}, m={m}, n={n}"
            if lora.trainable != m * r + r * n:
                return False, f"lora count wrong at r={r}"
    full = adp.param_count(adp.AdapterConfig(r=8), 64, 64).trainable
    lora = adp.param_count(adp.AdapterConfig(r=8, variant="lora"), 64, 64).trainable
    overhead = 100.0 * (full - lora) / lora
    ok = full - lora == 36 and f"{overhead:.2f}" == "3.52"
    return ok, f"m=n=64, r=8: {full} vs {lora} (+{overhead:.2f}%)"


def check_serialization(rng):
    for _ in range(20):
        variant = VARIANTS[int(rng.integers(len(VARIANTS)))]
        cfg = adp.AdapterConfig(r=int(rng.integers(1, 6)), variant=variant, seed=int(rng.integers(2**63)))
        ad = adp.random_adapter(cfg, int(rng.integers(1, 9)), int(rng.integers(1, 9)), rng)
        back = adp.deserialize(adp.serialize(ad))
        same = (
            back.config == ad.config
            and back.b.tobytes() == ad.b.tobytes()
            and back.a.tobytes() == ad.a.tobytes()
            and back.coeff.values.tobytes() == ad.coeff.values.tobytes()
            and np.array_equal(back.coeff.frozen, ad.coeff.frozen)
        )
        if not same:
            return False, "round-trip changed the adapter"
    payload = adp.serialize(ad)
    try:
        adp.deserialize(payload[: len(payload) // 2])
    except ParseError:
        return True, "20 bitwise round-trips; truncated payload rejected"
    return False, "truncated payload was accepted"


def check_numeric_rank_monotone(rng):
    m = rng.standard_normal((16, 6)) @ rng.standard_normal((6, 16))
    ranks = [numeric_rank(m, tol) for tol in (1e-14, 1e-10, 1e-6, 1e-2, 0.5)]
    return all(x >= y for x, y in zip(ranks, ranks[1:])), f"ranks {ranks}"


CHECKS = [
    ("pair_order_roundtrip", check_pair_order_roundtrip),
    ("factorization_identity", check_factorization),
    ("lora_degeneracy", check_lora_degeneracy),
    ("rank_bounds", check_rank_bounds),
    ("gradient_check", check_gradients),
    ("merge_consistency", check_merge),
    ("svd_properties", check_svd),
    ("numeric_rank_monotone", check_numeric_rank_monotone),
    ("eckart_young", check_eckart_young),
    ("interaction_oracle", check_interaction_oracle),
    ("param_counts", check_param_counts),
    ("serialization", check_serialization),
]


def run_all(seed=1):
    """Run every check; returns a list of ``(name, passed, detail, seconds)``."""
    results = []
    for name, fn in CHECKS:
        rng = np.random.default_rng([int(seed), len(results)])
        started = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a raised invariant counts as a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail, time.perf_counter() - started))
    return results
