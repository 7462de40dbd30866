"""Synchronous round orchestrator for CFL and DFL federations.

Each round: every trainer node runs local SGD, malicious nodes poison their
trained model if configured, models are exchanged losslessly along the
overlay edges, every node aggregates with its configured rule, moving-target
rewiring requests are applied at the barrier, and all trainer models are
evaluated on the shared test split.

CFL is realized as a star over n_clients + 1 nodes whose hub is a dataless
server: clients train and send to the hub, the hub aggregates over the client
models (never its own stale copy, so a FedAvg broadcast equals the fully
connected DFL aggregate bit for bit) and broadcasts the result back.

Everything is a pure function of the scenario config: seeds for training,
partitioning, attacks, and rewiring are derived per (purpose, node, round)
from the master seed, so runs are reproducible for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import aggregators, attacks, datasets, learner, metrics, params, topology, voyager
from .attacks import AttackSpec
from .config import ScenarioConfig, validate
from .datasets import LabeledDataset
from .learner import MlpArchitecture, TrainConfig
from .metrics import MetricRow
from .params import ModelParams
from .seeding import derive_seed
from .topology import TopologyGraph
from .voyager import ReputationTable

FLTRUST_ROOT_SIZE = 100     # clean samples reserved for the CFL FLTrust server


class ScenarioAbortedError(RuntimeError):
    """A node diverged or an invariant broke; the scenario cannot continue."""


@dataclass
class NodeState:
    id: int
    role: str                            # benign | malicious | server
    model: ModelParams
    previous_model: ModelParams
    train_data: LabeledDataset | None
    validation_data: LabeledDataset | None
    attack: AttackSpec
    aggregator: str
    reputation: ReputationTable = field(default_factory=ReputationTable)

    @property
    def is_trainer(self) -> bool:
        return self.role != "server"


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    clean_cms: dict[int, np.ndarray]
    triggered_cms: dict[int, np.ndarray]
    topology_hash: str
    wall_time_s: float
    bytes_exchanged: int
    sim_transfer_seconds: float


def select_malicious(n: int, pnr_percent: int, eligible: list[int], seed: int) -> frozenset[int]:
    """round(n * pnr / 100) node ids drawn uniformly from the eligible set."""
    if pnr_percent % 10 != 0 or not 0 <= pnr_percent <= 90:
        raise ValueError(f"pnr_percent must be a multiple of 10 in 0..90, got {pnr_percent}")
    count = int(round(n * pnr_percent / 100))
    if count == 0:
        return frozenset()
    if count > len(eligible):
        raise ValueError(f"cannot place {count} malicious nodes among {len(eligible)} eligible")
    rng = np.random.default_rng(seed)
    picked = rng.choice(np.asarray(sorted(eligible)), size=count, replace=False)
    return frozenset(int(i) for i in picked)


def _pmap(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class Simulation:
    """One scenario end to end; use :func:`run_scenario` unless tests need
    access to intermediate node state."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = validate(cfg)
        self.records: list[RoundRecord] = []
        self._setup()

    # -- setup ---------------------------------------------------------------

    def _load_data(self) -> tuple[LabeledDataset, LabeledDataset]:
        ds = self.cfg.dataset
        if ds.name in ("mnist", "fashion_mnist"):
            train = datasets.load_idx(ds.train_images, ds.train_labels)
            test = datasets.load_idx(ds.test_images, ds.test_labels)
        else:
            train = datasets.synthetic_blobs(ds.classes, ds.per_class, ds.dim, ds.spread,
                                             derive_seed(self.cfg.master_seed, "synthetic_train"))
            test = datasets.synthetic_blobs(ds.classes, ds.test_per_class, ds.dim, ds.spread,
                                            derive_seed(self.cfg.master_seed, "synthetic_test"))
        if ds.subsample < 1.0:
            train = datasets.subsample_fraction(train, ds.subsample)
        return train, test

    def _build_topology(self) -> TopologyGraph:
        cfg = self.cfg
        if cfg.paradigm == "cfl":
            return topology.star(cfg.n_clients + 1, hub=self.server_id)
        if cfg.n_clients == 1:
            return TopologyGraph(1, frozenset())    # solo node: rounds are plain training
        name = cfg.topology.name
        if name == "fully_connected":
            return topology.fully_connected(cfg.n_clients)
        if name == "ring":
            return topology.ring(cfg.n_clients)
        if name == "star":
            return topology.star(cfg.n_clients, hub=cfg.topology.hub)
        return topology.watts_strogatz(cfg.n_clients, cfg.topology.k, cfg.topology.p,
                                       derive_seed(cfg.master_seed, "topology"))

    def _setup(self) -> None:
        cfg = self.cfg
        seed = cfg.master_seed
        self.server_id = cfg.n_clients if cfg.paradigm == "cfl" else None
        train_all, self.test_data = self._load_data()

        self.arch = MlpArchitecture((train_all.dim, *cfg.hidden_sizes, train_all.label_count))

        # FLTrust's CFL server trains its reference update on a clean root split
        # carved off before partitioning.
        self.root_data = None
        if cfg.paradigm == "cfl" and cfg.aggregator == "fltrust":
            rng = np.random.default_rng(derive_seed(seed, "root_split"))
            perm = rng.permutation(train_all.n)
            self.root_data = train_all.take(perm[:FLTRUST_ROOT_SIZE])
            train_all = train_all.take(perm[FLTRUST_ROOT_SIZE:])

        shards = datasets.partition_iid(train_all, cfg.n_clients, derive_seed(seed, "partition"))

        if cfg.paradigm == "cfl" or cfg.topology.name == "star":
            hub = self.server_id if cfg.paradigm == "cfl" else cfg.topology.hub
            eligible = [i for i in range(cfg.n_clients) if i != hub]
        else:
            eligible = list(range(cfg.n_clients))
        self.malicious = select_malicious(cfg.n_clients, cfg.pnr_percent, eligible,
                                          derive_seed(seed, "malice"))
        self.benign = frozenset(range(cfg.n_clients)) - self.malicious

        self.nodes: dict[int, NodeState] = {}
        for i in range(cfg.n_clients):
            shard = shards[i]
            is_malicious = i in self.malicious
            attack = cfg.attack if is_malicious else AttackSpec(kind="none")
            if is_malicious and attack.poisons_data:
                shard = self._poison_data(shard, attack, i)
            train_part, val_part = datasets.holdout_split(shard, cfg.holdout_frac,
                                                          derive_seed(seed, "holdout", i))
            model = learner.init_model(self.arch, derive_seed(seed, "init", i))
            self.nodes[i] = NodeState(
                id=i, role="malicious" if is_malicious else "benign",
                model=model, previous_model=model,
                train_data=train_part, validation_data=val_part,
                attack=attack, aggregator=cfg.aggregator,
            )
        if cfg.paradigm == "cfl":
            server_model = learner.init_model(self.arch, derive_seed(seed, "init", self.server_id))
            self.nodes[self.server_id] = NodeState(
                id=self.server_id, role="server", model=server_model,
                previous_model=server_model, train_data=None, validation_data=self.root_data,
                attack=AttackSpec(kind="none"), aggregator=cfg.aggregator,
            )

        self.topology = self._build_topology()
        self.triggered_test = None
        if cfg.attack.kind == "backdoor":
            self.triggered_test = attacks.apply_trigger_all(self.test_data, cfg.attack.trigger)
        self.param_count = self.nodes[0].model.total_count

    def _poison_data(self, shard: LabeledDataset, attack: AttackSpec, node_id: int) -> LabeledDataset:
        seed = derive_seed(self.cfg.master_seed, "data_poison", node_id)
        if attack.kind == "untargeted_label_flip":
            return attacks.flip_labels_untargeted(shard, seed)
        if attack.kind == "untargeted_sample_poison":
            return attacks.poison_samples_gaussian(shard, attack.noise_ratio, seed)
        if attack.kind == "targeted_label_flip":
            return attacks.flip_labels_targeted(shard, attack.source_label, attack.target_label)
        if attack.kind == "backdoor":
            return attacks.implant_backdoor(shard, attack.trigger, attack.target_label)
        raise ValueError(f"not a data attack: {attack.kind}")

    # -- round body ----------------------------------------------------------

    def _train_node(self, args: tuple[int, int]) -> tuple[int, ModelParams]:
        node_id, round_index = args
        node = self.nodes[node_id]
        cfg = TrainConfig(epochs=self.cfg.epochs_per_round,
                          learning_rate=self.cfg.train.learning_rate,
                          batch_size=self.cfg.train.batch_size,
                          seed=derive_seed(self.cfg.master_seed, "train", node_id, round_index))
        try:
            model = learner.train(node.model, node.train_data, cfg)
        except learner.TrainingDivergedError as exc:
            raise ScenarioAbortedError(f"node {node_id} diverged in round {round_index}: {exc}") from exc
        if node.attack.poisons_model:
            # One shared draw per round across all poisoned nodes: colluding
            # attackers whose models cluster, per the documented adversary model.
            model = attacks.poison_model_gaussian(
                model, node.attack.noise_ratio * attacks.MODEL_POISON_GAIN,
                derive_seed(self.cfg.master_seed, "model_poison", round_index))
        return node_id, model

    def _aggregate_node(self, args) -> tuple[int, ModelParams]:
        node_id, delivered, round_index = args
        node = self.nodes[node_id]
        received = delivered[node_id]
        flagged: set[int] = set()
        if self.cfg.voyager.enable:
            for peer, model in received:
                node.reputation.update(peer, params.cosine_similarity(
                    params.flatten(node.model), params.flatten(model)))
            flagged = voyager.detect_anomalies(node.model, received, self.cfg.voyager.tau)
            received = [(p, m) for p, m in received if p not in flagged]
        inp = aggregators.AggregationInput(
            own_id=node_id, own_model=node.model, own_previous=node.previous_model,
            neighbor_models=tuple(received), local_validation=node.validation_data,
        )
        aggregated = aggregators.aggregate(node.aggregator, inp, self.cfg.aggregator_params)
        return node_id, aggregated, flagged

    def run_round(self, round_index: int) -> RoundRecord:
        cfg = self.cfg
        start = time.perf_counter()
        trainer_ids = sorted(i for i, n in self.nodes.items() if n.is_trainer)

        # Phase 1: local training (+ model poisoning) in parallel.
        trained = dict(_pmap(self._train_node, [(i, round_index) for i in trainer_ids],
                             cfg.workers))
        for i in trainer_ids:
            self.nodes[i].previous_model = self.nodes[i].model
            self.nodes[i].model = trained[i]

        # Phase 2: synchronous lossless exchange along current edges.
        if cfg.paradigm == "cfl":
            client_models = [(i, self.nodes[i].model) for i in range(cfg.n_clients)]
            messages = 2 * cfg.n_clients
            new_topology = self.topology
            broadcast = self._server_aggregate(client_models, round_index)
            self.nodes[self.server_id].previous_model = self.nodes[self.server_id].model
            self.nodes[self.server_id].model = broadcast
            for i in range(cfg.n_clients):
                self.nodes[i].model = broadcast
        else:
            delivered = {i: [(j, self.nodes[j].model) for j in self.topology.neighbors(i)]
                         for i in trainer_ids}
            messages = sum(len(v) for v in delivered.values())
            results = _pmap(self._aggregate_node,
                            [(i, delivered, round_index) for i in trainer_ids], cfg.workers)
            rewire_requests = {}
            for node_id, aggregated, flagged in results:
                self.nodes[node_id].model = aggregated
                if cfg.voyager.enable and flagged:
                    rewire_requests[node_id] = flagged
            new_topology = self.topology
            for node_id in sorted(rewire_requests):
                new_topology = self._apply_rewiring(new_topology, node_id,
                                                    rewire_requests[node_id], round_index)
        self.topology = new_topology

        # Phase 3: evaluate every trainer on the shared test split.
        clean = dict(_pmap(lambda i: (i, learner.evaluate(self.nodes[i].model, self.test_data)),
                           trainer_ids, cfg.workers))
        triggered: dict[int, np.ndarray] = {}
        if self.triggered_test is not None:
            benign_ids = sorted(self.benign)
            triggered = dict(_pmap(
                lambda i: (i, learner.evaluate(self.nodes[i].model, self.triggered_test)),
                benign_ids, cfg.workers))

        record = RoundRecord(
            round_index=round_index,
            clean_cms=clean,
            triggered_cms=triggered,
            topology_hash=self.topology.snapshot_hash(),
            wall_time_s=time.perf_counter() - start,
            bytes_exchanged=self.param_count * 8 * messages,
            sim_transfer_seconds=self.param_count * 8 * messages * 8 / (cfg.bandwidth_mbps * 1e6),
        )
        self.records.append(record)
        return record

    def _server_aggregate(self, client_models: list[tuple[int, ModelParams]],
                          round_index: int) -> ModelParams:
        """Aggregate the received client models with the configured rule.

        The candidate set is exactly the client models; the server's stale
        broadcast is never a candidate.
        """
        cfg = self.cfg
        server = self.nodes[self.server_id]
        if cfg.aggregator == "fltrust":
            reference = learner.train(server.model, self.root_data, TrainConfig(
                epochs=1, learning_rate=cfg.train.learning_rate,
                batch_size=cfg.train.batch_size,
                seed=derive_seed(cfg.master_seed, "train", self.server_id, round_index)))
            inp = aggregators.AggregationInput(
                own_id=self.server_id, own_model=reference, own_previous=server.model,
                neighbor_models=tuple(client_models), local_validation=self.root_data)
            return aggregators.fl_trust(inp)
        (first_id, first_model), rest = client_models[0], client_models[1:]
        inp = aggregators.AggregationInput(
            own_id=first_id, own_model=first_model, own_previous=server.model,
            neighbor_models=tuple(rest), local_validation=None)
        return aggregators.aggregate(cfg.aggregator, inp, cfg.aggregator_params)

    def _apply_rewiring(self, current: TopologyGraph, node_id: int, flagged: set[int],
                        round_index: int) -> TopologyGraph:
        node = self.nodes[node_id]
        drop, add = voyager.plan_rewiring(
            current, node_id, flagged, node.reputation,
            derive_seed(self.cfg.master_seed, "voyager", node_id, round_index))
        # Earlier deployments this barrier may already have touched our edges.
        add = [a for a in add if not current.has_edge(node_id, a)]
        if not drop and not add:
            return current
        return voyager.deploy_connections(current, node_id, drop, add)

    def run(self) -> list[RoundRecord]:
        for round_index in range(1, self.cfg.rounds + 1):
            self.run_round(round_index)
        return self.records

    # -- reporting -----------------------------------------------------------

    def metric_rows(self) -> list[MetricRow]:
        """Per-round benign-average metric rows for this scenario."""
        rows = []
        sid = self.cfg.scenario_id()
        attack = self.cfg.attack
        for record in self.records:
            f1 = {i: metrics.macro_f1(cm) for i, cm in record.clean_cms.items()}
            rows.append(MetricRow(sid, record.round_index, "f1_benign_avg",
                                  metrics.benign_average(f1, set(self.benign))))
            if attack.kind == "targeted_label_flip":
                asr = {i: metrics.asr_targeted(cm, attack.source_label, attack.target_label)
                       for i, cm in record.clean_cms.items()}
                rows.append(MetricRow(sid, record.round_index, "asr_targeted",
                                      metrics.benign_average(asr, set(self.benign))))
            if attack.kind == "backdoor" and record.triggered_cms:
                asr = {i: metrics.asr_backdoor(cm, attack.target_label)
                       for i, cm in record.triggered_cms.items()}
                rows.append(MetricRow(sid, record.round_index, "asr_backdoor",
                                      metrics.benign_average(asr, set(self.benign))))
        return rows


def run_scenario(cfg: ScenarioConfig) -> list[RoundRecord]:
    """Build the federation from the config, run all rounds, return records."""
    return Simulation(cfg).run()
