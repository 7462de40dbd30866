"""Calibration battery: run key scenarios at full scale and print final F1/ASR.

Usage: python3 tools/calibrate.py <case> [...]
Not part of the package or test suite; development aid only.
"""
import sys
import time

sys.path.insert(0, "tests")

import mnistlike
from dflsim.config import DatasetConfig, ScenarioConfig, TopologyConfig, validate
from dflsim.attacks import AttackSpec
from dflsim.engine import Simulation

PATHS, KIND = mnistlike.resolve_dataset_paths()


def base_cfg(**kw):
    ds = DatasetConfig(name="mnist", **PATHS)
    defaults = dict(dataset=ds, master_seed=11, workers=2)
    defaults.update(kw)
    return validate(ScenarioConfig(**defaults))


CASES = {
    "baseline": lambda: base_cfg(),
    "mp50_fedavg": lambda: base_cfg(attack=AttackSpec(kind="random_model_poison"), pnr_percent=50),
    "mp30_krum": lambda: base_cfg(attack=AttackSpec(kind="random_model_poison"), pnr_percent=30, aggregator="krum"),
    "mp70_krum": lambda: base_cfg(attack=AttackSpec(kind="random_model_poison"), pnr_percent=70, aggregator="krum"),
    "lf50_fedavg": lambda: base_cfg(attack=AttackSpec(kind="untargeted_label_flip"), pnr_percent=50),
    "lf90_fedavg": lambda: base_cfg(attack=AttackSpec(kind="untargeted_label_flip"), pnr_percent=90),
    "lf90_sentinel": lambda: base_cfg(attack=AttackSpec(kind="untargeted_label_flip"), pnr_percent=90, aggregator="sentinel"),
    "sp50_fedavg": lambda: base_cfg(attack=AttackSpec(kind="untargeted_sample_poison"), pnr_percent=50),
    "bd50_fedavg": lambda: base_cfg(attack=AttackSpec(kind="backdoor"), pnr_percent=50),
    "tf50_cfl": lambda: base_cfg(attack=AttackSpec(kind="targeted_label_flip"), pnr_percent=50, paradigm="cfl"),
    "tf10_cfl": lambda: base_cfg(attack=AttackSpec(kind="targeted_label_flip"), pnr_percent=10, paradigm="cfl"),
    "ws2_lf30": lambda: base_cfg(attack=AttackSpec(kind="untargeted_label_flip"), pnr_percent=30,
                                 topology=TopologyConfig(name="watts_strogatz", k=2)),
    "ws8_lf30": lambda: base_cfg(attack=AttackSpec(kind="untargeted_label_flip"), pnr_percent=30,
                                 topology=TopologyConfig(name="watts_strogatz", k=8)),
}


def main():
    names = sys.argv[1:] or list(CASES)
    for name in names:
        cfg = CASES[name]()
        t0 = time.time()
        sim = Simulation(cfg)
        sim.run()
        rows = sim.metric_rows()
        final = {r.metric: r.value for r in rows if r.round_index == cfg.rounds}
        print(f"{name:14s} {time.time()-t0:6.1f}s  final={ {k: round(v,4) for k,v in final.items()} }")
        for metric in sorted({r.metric for r in rows}):
            trace = [round(r.value, 3) for r in rows if r.metric == metric]
            print(f"{'':14s} {metric} trace: {trace}")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
