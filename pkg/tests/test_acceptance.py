"""Acceptance gate: every benchmark criterion at its stated tolerance.

Quantitative criteria (1-9) run at benchmark scale: 10 clients, 10 rounds,
3 epochs per round, the full 60k/10k-sample corpus, median over 3 master
seeds. Real MNIST is used when MNIST_DIR points at the IDX files; otherwise
a deterministic MNIST-shaped synthetic digit corpus of identical geometry is
rendered to IDX files and loaded through the same pipeline. Property
criteria (10-15) run at CI scale on synthetic data.

One PASS/FAIL line per criterion is printed (run with -s to stream them).
"""

from fractions import Fraction
from math import comb
import statistics

import numpy as np
import pytest

import mnistlike
from conftest import random_model
from dflsim import aggregators, datasets, learner, metrics, params, topology
from dflsim.attacks import AttackSpec
from dflsim.config import (DatasetConfig, ScenarioConfig, TopologyConfig, validate)
from dflsim.engine import Simulation
from dflsim.learner import MlpArchitecture, TrainConfig
from dflsim.params import ModelParams

SEEDS = (11, 12, 13)
DATASET_PATHS, DATASET_KIND = mnistlike.resolve_dataset_paths()

_CACHE: dict[str, list] = {}


def run_case(master_seed: int, **kw) -> list:
    """Run one benchmark-scale scenario (cached) and return its metric rows."""
    ds = DatasetConfig(name="mnist", **DATASET_PATHS)
    defaults = dict(dataset=ds, master_seed=master_seed, workers=2)
    defaults.update(kw)
    cfg = validate(ScenarioConfig(**defaults))
    key = cfg.scenario_id()
    if key not in _CACHE:
        sim = Simulation(cfg)
        sim.run()
        _CACHE[key] = sim.metric_rows()
    return _CACHE[key]


def final_value(rows, metric: str) -> float:
    vals = [(r.round_index, r.value) for r in rows if r.metric == metric]
    if not vals:
        raise AssertionError(f"metric {metric} missing from scenario rows")
    return max(vals)[1]


def median_final(metric: str, **kw) -> float:
    return statistics.median(final_value(run_case(seed, **kw), metric) for seed in SEEDS)


def report(criterion: str, passed: bool, detail: str) -> None:
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} [{DATASET_KIND}] {detail}"
    print(line)
    assert passed, line


# --- quantitative reproductions (benchmark scale) -----------------------------

def test_benchmark_corpus_contract():
    """The corpus behind criteria 1-9 has the benchmark geometry: 60000
    training and 10000 test samples of 28x28 grayscale, 10 classes."""
    train = datasets.load_idx(DATASET_PATHS["train_images"], DATASET_PATHS["train_labels"])
    test = datasets.load_idx(DATASET_PATHS["test_images"], DATASET_PATHS["test_labels"])
    assert (train.n, train.dim, train.label_count) == (60000, 784, 10)
    assert (test.n, test.image_shape) == (10000, (28, 28))
    assert train.features.min() >= 0.0 and train.features.max() <= 1.0


def test_criterion_01_baseline_health():
    f1 = median_final("f1_benign_avg")
    report("C1 baseline-health", f1 >= 0.90,
           f"DFL-fully FedAvg PNR=0 final F1={f1:.4f} (need >= 0.90)")


def test_criterion_02_model_poisoning_collapse():
    f1 = median_final("f1_benign_avg", attack=AttackSpec(kind="random_model_poison"),
                      pnr_percent=50)
    report("C2 model-poison-collapse", f1 <= 0.15,
           f"DFL-fully FedAvg model-poison PNR=50 final F1={f1:.4f} (need <= 0.15)")


def test_criterion_03_krum_resists_then_collapses():
    f1_30 = median_final("f1_benign_avg", attack=AttackSpec(kind="random_model_poison"),
                         pnr_percent=30, aggregator="krum")
    f1_70 = median_final("f1_benign_avg", attack=AttackSpec(kind="random_model_poison"),
                         pnr_percent=70, aggregator="krum")
    report("C3 krum-breakdown", f1_30 >= 0.85 and f1_70 <= 0.15,
           f"Krum model-poison F1@PNR30={f1_30:.4f} (>=0.85), F1@PNR70={f1_70:.4f} (<=0.15)")


def test_criterion_04_severity_ordering():
    f1_model = median_final("f1_benign_avg", attack=AttackSpec(kind="random_model_poison"),
                            pnr_percent=50)
    f1_label = median_final("f1_benign_avg", attack=AttackSpec(kind="untargeted_label_flip"),
                            pnr_percent=50)
    f1_sample = median_final("f1_benign_avg",
                             attack=AttackSpec(kind="untargeted_sample_poison"),
                             pnr_percent=50)
    strict = (f1_label - f1_model >= 0.05) and (f1_sample - f1_label >= 0.05)
    monotone_with_ties = (f1_model <= f1_label + 0.05) and (f1_label <= f1_sample + 0.05)
    report("C4 severity-ordering", strict or monotone_with_ties,
           f"F1@PNR50: model={f1_model:.4f} < label={f1_label:.4f} < sample={f1_sample:.4f}")


def test_criterion_05_topology_density_monotonicity():
    finals = {}
    for k in (2, 4, 6, 8):
        finals[k] = median_final("f1_benign_avg",
                                 attack=AttackSpec(kind="untargeted_label_flip"),
                                 pnr_percent=30,
                                 topology=TopologyConfig(name="watts_strogatz", k=k))
    ok = all(finals[b] >= finals[a] - 0.03 for a, b in ((2, 4), (4, 6), (6, 8)))
    report("C5 density-monotonicity", ok,
           "final F1 by avg degree: " + ", ".join(f"k={k}: {v:.4f}" for k, v in finals.items()))


def test_criterion_06_backdoor_success_with_clean_accuracy():
    asr = median_final("asr_backdoor", attack=AttackSpec(kind="backdoor"), pnr_percent=50)
    f1 = median_final("f1_benign_avg", attack=AttackSpec(kind="backdoor"), pnr_percent=50)
    report("C6 backdoor", asr >= 0.60 and f1 >= 0.85,
           f"DFL-fully FedAvg backdoor PNR=50: ASR={asr:.4f} (>=0.60), clean F1={f1:.4f} (>=0.85)")


def test_criterion_07_targeted_flip_stealth_and_effect():
    asr_50 = median_final("asr_targeted", attack=AttackSpec(kind="targeted_label_flip"),
                          pnr_percent=50, paradigm="cfl")
    asr_10 = median_final("asr_targeted", attack=AttackSpec(kind="targeted_label_flip"),
                          pnr_percent=10, paradigm="cfl")
    report("C7 targeted-flip", asr_50 >= 0.50 and asr_10 <= 0.05,
           f"CFL FedAvg 7->4: ASR@PNR50={asr_50:.4f} (>=0.50), ASR@PNR10={asr_10:.4f} (<=0.05)")


def test_criterion_08_cfl_dfl_equivalence_bit_exact():
    seed = SEEDS[0]
    dfl_rows = run_case(seed)
    cfl_rows = run_case(seed, paradigm="cfl")
    dfl_trace = [r.value for r in dfl_rows if r.metric == "f1_benign_avg"]
    cfl_trace = [r.value for r in cfl_rows if r.metric == "f1_benign_avg"]
    identical = dfl_trace == cfl_trace and len(dfl_trace) == 10
    report("C8 cfl-dfl-equivalence", identical,
           f"per-round benign F1 traces bit-identical over {len(dfl_trace)} rounds")


def test_criterion_09_sentinel_qualitative_band():
    f1_sentinel = median_final("f1_benign_avg",
                               attack=AttackSpec(kind="untargeted_label_flip"),
                               pnr_percent=90, aggregator="sentinel")
    f1_fedavg = median_final("f1_benign_avg",
                             attack=AttackSpec(kind="untargeted_label_flip"),
                             pnr_percent=90)
    report("C9 sentinel-band", f1_sentinel >= 0.70 and f1_fedavg <= 0.10,
           f"label-flip PNR=90: Sentinel F1={f1_sentinel:.4f} (>=0.70), "
           f"FedAvg F1={f1_fedavg:.4f} (<=0.10)")


# --- property suites (CI scale) -----------------------------------------------

def test_criterion_10_params_properties():
    rng = np.random.default_rng(101)
    worst_triangle = 0.0
    for _ in range(1000):
        a = random_model(rng, sizes=(3, 2))
        b = random_model(rng, sizes=(3, 2))
        c = random_model(rng, sizes=(3, 2))
        dab = params.l2_distance(a, b)
        assert dab == params.l2_distance(b, a) and params.l2_distance(a, a) == 0.0
        worst_triangle = max(worst_triangle,
                             dab - params.l2_distance(a, c) - params.l2_distance(c, b))
        cap = float(rng.uniform(0.1, 4.0))
        assert params.l2_norm(params.clip_to_norm(a, cap)) <= cap + 1e-9
        assert (params.flatten(params.unflatten(params.flatten(a), a))
                == params.flatten(a)).all()
        va, vb = rng.standard_normal(6), rng.standard_normal(6)
        al, be = rng.uniform(0.1, 10, size=2)
        assert abs(params.cosine_similarity(al * va, be * vb)
                   - params.cosine_similarity(va, vb)) <= 1e-12
    report("C10 params-properties", worst_triangle <= 1e-9,
           f"1000 random cases: metric axioms, clip bound, bijection, "
           f"cosine scale-invariance (worst triangle slack {worst_triangle:.2e})")


def test_criterion_11_gradient_check():
    rng = np.random.default_rng(202)
    model = learner.init_model(MlpArchitecture((4, 3, 2)), 7)
    x = rng.uniform(0, 1, size=(5, 4))
    y = np.array([0, 1, 1, 0, 1])
    _, grads = learner.loss_and_gradients(model, x, y)
    grad_flat = params.flatten(ModelParams(tuple((dw, db) for dw, db in grads), model.arch_id))
    flat = params.flatten(model)
    h = 1e-5
    worst = 0.0
    for idx in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[idx] += h
        down[idx] -= h
        lp, _ = learner.loss_and_gradients(params.unflatten(up, model), x, y)
        lm, _ = learner.loss_and_gradients(params.unflatten(down, model), x, y)
        fd = (lp - lm) / (2 * h)
        rel = abs(fd - grad_flat[idx]) / max(abs(fd), abs(grad_flat[idx]), 1e-8)
        worst = max(worst, rel)
    report("C11 gradient-check", worst <= 1e-4,
           f"finite differences vs analytic on [4,3,2]: worst relative error {worst:.2e}")


def test_criterion_12_aggregator_properties():
    rng = np.random.default_rng(303)
    val = datasets.synthetic_blobs(4, 10, 8, 0.05, seed=3)
    arch = MlpArchitecture((8, 6, 4))
    own = learner.train(learner.init_model(arch, 1), val,
                        TrainConfig(epochs=2, learning_rate=0.2, batch_size=8, seed=2))
    neighbors = [(i, learner.train(learner.init_model(arch, 30 + i), val,
                                   TrainConfig(epochs=1, learning_rate=0.2, batch_size=8,
                                               seed=i))) for i in range(1, 5)]
    ok = True
    for name in ("fedavg", "krum", "median", "trimmedmean", "fltrust", "sentinel"):
        inp = aggregators.AggregationInput(0, own, own_previous=learner.init_model(arch, 1),
                                           neighbor_models=tuple(neighbors),
                                           local_validation=val)
        perm = [neighbors[i] for i in rng.permutation(4)]
        inp_p = aggregators.AggregationInput(0, own, own_previous=learner.init_model(arch, 1),
                                             neighbor_models=tuple(perm),
                                             local_validation=val)
        same = (params.flatten(aggregators.aggregate(name, inp))
                == params.flatten(aggregators.aggregate(name, inp_p))).all()
        empty = aggregators.aggregate(
            name, aggregators.AggregationInput(0, own,
                                               own_previous=learner.init_model(arch, 1),
                                               local_validation=val)) is own
        ok = ok and same and empty

    base = own
    cluster = [base] + [params.unflatten(
        params.flatten(base) + 1e-7 * rng.standard_normal(base.total_count), base)
        for _ in range(4)]
    adversary = params.unflatten(params.flatten(base)
                                 + 1e6 * rng.standard_normal(base.total_count), base)
    inp = aggregators.AggregationInput(0, cluster[0],
                                       own_previous=base,
                                       neighbor_models=tuple(enumerate(cluster[1:]
                                                                       + [adversary], 1)),
                                       local_validation=val)
    flats = np.stack([params.flatten(m) for m in cluster])
    lo, hi = flats.min(axis=0) - 1e-6, flats.max(axis=0) + 1e-6
    robust_inside = all(
        ((params.flatten(out) >= lo) & (params.flatten(out) <= hi)).all()
        for out in (aggregators.krum(inp, f=1), aggregators.coordinate_median(inp),
                    aggregators.trimmed_mean(inp, 0.2), aggregators.sentinel(inp, 0.5)))
    avg_out = params.flatten(aggregators.fed_avg(inp))
    fedavg_dragged = not ((avg_out >= lo) & (avg_out <= hi)).all()
    ok = ok and robust_inside and fedavg_dragged
    report("C12 aggregator-properties", ok,
           "permutation invariance, empty-neighbor identity, breakdown "
           f"(robust rules inside cluster box: {robust_inside}, fedavg dragged: {fedavg_dragged})")


def test_criterion_13_topology_properties():
    rng = np.random.default_rng(404)
    ok_edges = True
    for _ in range(1000):
        n = int(rng.integers(6, 20))
        k = int(rng.choice([2, 4]))
        p = float(rng.random())
        g = topology.watts_strogatz(n, k, p, int(rng.integers(2 ** 32)))
        ok_edges = ok_edges and len(g.edges) == n * k // 2
    ok_pmf = True
    for n in range(2, 13):
        for m in range(n):
            for d in range(1, n):
                pmf = topology.malicious_exposure_pmf(n, m, d)
                denom = comb(n - 1, d)
                for x in range(d + 1):
                    exact = Fraction(comb(m, x) * comb(n - 1 - m, d - x), denom)
                    ok_pmf = ok_pmf and abs(pmf[x] - float(exact)) <= 1e-15
                ok_pmf = ok_pmf and abs(pmf.sum() - 1.0) <= 1e-12
    report("C13 topology-properties", ok_edges and ok_pmf,
           f"1000 Watts-Strogatz edge-count draws ok={ok_edges}; exact hypergeometric "
           f"PMF over all n<=12 ok={ok_pmf}")


def test_criterion_14_engine_determinism():
    cfg_kw = dict(
        dataset=DatasetConfig(name="synthetic", classes=4, per_class=40,
                              test_per_class=20, dim=8, spread=0.05),
        n_clients=4, rounds=2, epochs_per_round=1, hidden_sizes=(12,), master_seed=5,
    )
    traces = []
    for workers in (1, 2, 4):
        cfg = validate(ScenarioConfig(workers=workers, **cfg_kw))
        sims = []
        for _ in range(2):
            sim = Simulation(cfg)
            sim.run()
            sims.append({i: params.flatten(n.model) for i, n in sim.nodes.items()})
        assert all((sims[0][i] == sims[1][i]).all() for i in sims[0])
        traces.append(sims[0])
    same_across = all((traces[0][i] == t[i]).all() for t in traces[1:] for i in traces[0])
    report("C14 engine-determinism", same_across,
           "double-run bit equality for 4-node/2-round scenario at 1, 2, 4 workers")


def test_criterion_15_metric_closed_forms():
    cm = np.zeros((10, 10), dtype=int)
    cm[7, 4], cm[7, 7] = 8, 2
    ok = metrics.asr_targeted(cm, 7, 4) == pytest.approx(0.8)
    bd = np.zeros((10, 10), dtype=int)
    bd[4, 4] = 10
    for i in range(10):
        if i != 4:
            bd[i, 4] = 5
    bd[0, 0] = 100 - bd.sum()
    ok = ok and metrics.asr_backdoor(bd, 4) == pytest.approx(0.5)
    ok = ok and metrics.macro_f1(np.array([[10, 0], [10, 0]])) == pytest.approx(1 / 3)
    rng = np.random.default_rng(505)
    for _ in range(200):
        rand_cm = rng.integers(0, 40, size=(6, 6))
        rand_cm[1, 1] += 1
        perm = rng.permutation(6)
        ok = ok and 0.0 <= metrics.macro_f1(rand_cm) <= 1.0
        ok = ok and metrics.macro_f1(rand_cm[np.ix_(perm, perm)]) == pytest.approx(
            metrics.macro_f1(rand_cm))
        ok = ok and 0.0 <= metrics.asr_targeted(rand_cm, 1, 2) <= 1.0
    report("C15 metric-closed-forms", bool(ok),
           "ASR formulas, macro-F1 closed form, range and relabeling invariants")
