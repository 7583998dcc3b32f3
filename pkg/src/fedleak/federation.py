"""The federated round engine: download, local training, averaging
aggregation, validation, and the latch that arms the attack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import seeding
from .attack import AdversaryState, adversary_local_update, snapshot_reconstruction
from .data import NUM_DATA_CLASSES, Partition
from .errors import AggregationError, DataError, MetricError
from .metrics import RoundRecord, confusion, macro_scores, reconstruction_distance, roc_auc
from .models import ParamSet, discriminator_forward, init_adam, train_batch
from .tensor import DTYPE, Tensor, softmax

BENIGN = "benign"
ADVERSARY = "adversary"


def attack_gate(validation_accuracy: float, threshold: float) -> bool:
    """True iff accuracy is strictly better than the threshold."""
    return validation_accuracy > threshold


@dataclass
class AttackGate:
    """Latches open the first time validation accuracy beats the threshold."""

    threshold: float
    latched: bool = False

    def update(self, validation_accuracy: float) -> bool:
        if attack_gate(validation_accuracy, self.threshold):
            self.latched = True
        return self.latched


@dataclass
class ClientState:
    """A participant: benign clients own one class partition, the adversary
    owns an AdversaryState and no real data."""

    client_id: int
    role: str
    partition: Optional[Partition] = None
    adversary: Optional[AdversaryState] = None


@dataclass
class ParameterServer:
    """Holds the global model, the round counter, and the attack gate."""

    global_params: ParamSet
    gate: AttackGate
    round: int = 0


def aggregate(uploads, client_ids=None) -> ParamSet:
    """Elementwise arithmetic mean of uploaded parameter sets.

    client_ids, when given, names the offending upload in shape errors.
    Averaging k identical uploads reproduces them exactly.
    """
    if not uploads:
        raise AggregationError("nothing to aggregate")
    ref = uploads[0]
    for i, up in enumerate(uploads):
        if not ref.same_shapes(up):
            who = client_ids[i] if client_ids else i
            raise AggregationError(
                f"upload from client {who} has shapes {up.shapes()}, "
                f"expected {ref.shapes()}")
    if len(uploads) == 1:
        return ref.clone()
    entries = []
    for name in ref.names():
        stack = np.stack([up[name].data.astype(np.float64) for up in uploads])
        entries.append((name, Tensor(ref[name].shape,
                                     stack.mean(axis=0).astype(DTYPE))))
    return ParamSet(entries)


def _batches(items, size):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def benign_local_update(client: ClientState, global_params: ParamSet,
                        cfg, round_index: int) -> ParamSet:
    """One client's local training pass for a round.

    Starts from a copy of the global model, samples images_per_round images
    from the client's partition (without replacement within the round), and
    trains local_epochs over them in batches. Returns the updated parameters.
    """
    if client.partition is None or not client.partition.samples:
        raise DataError(f"client {client.client_id} has no training data")
    rng = seeding.child_rng(cfg.master_seed, seeding.CLIENT_ROUND,
                            client.client_id, round_index)
    pool = client.partition.samples
    k = min(cfg.images_per_round, len(pool))
    chosen = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
    params = global_params.clone()
    states = init_adam(params, cfg.lr_discriminator)
    for _ in range(cfg.local_epochs):
        for group in _batches(chosen, cfg.batch_size):
            batch = [(s.pixels, s.label) for s in group]
            params, states, _ = train_batch(params, batch, states)
    return params


def evaluate_global(params: ParamSet, testset, num_classes: int = NUM_DATA_CLASSES):
    """Validation metrics of a parameter set over labeled images.

    Returns (accuracy, precision, recall, f1, per_class_auc, curves).
    Predictions argmax over every logit, the fake class included, so fake
    predictions on real data count as errors. Classes absent from the test
    set get AUC nan.
    """
    if not testset:
        raise ValueError("empty test set")
    y_true = np.empty(len(testset), dtype=np.int64)
    y_pred = np.empty(len(testset), dtype=np.int64)
    prob_rows = []
    for i, sample in enumerate(testset):
        logits, _ = discriminator_forward(params, sample.pixels)
        p = softmax(logits).data
        y_true[i] = sample.label
        y_pred[i] = int(np.argmax(p))
        prob_rows.append(p.astype(np.float64))
    probs = np.stack(prob_rows)
    counts = confusion(y_true, y_pred, num_classes)
    accuracy, precision, recall, f1 = macro_scores(counts)
    aucs = []
    curves = {}
    for c in range(num_classes):
        try:
            curve, auc = roc_auc(probs[:, c], y_true == c)
        except MetricError:
            curve, auc = [], math.nan
        aucs.append(auc)
        curves[c] = curve
    return accuracy, precision, recall, f1, aucs, curves


def _find_target_partition(clients, target_class: int) -> Optional[Partition]:
    for client in clients:
        if client.role == BENIGN and client.partition is not None \
                and client.partition.owner_class == target_class:
            return client.partition
    return None


def select_participants(clients, cfg, round_index: int):
    """All clients by default; a seeded subset when clients_per_round is set."""
    k = getattr(cfg, "clients_per_round", 0)
    if k <= 0 or k >= len(clients):
        return list(clients)
    rng = seeding.child_rng(cfg.master_seed, seeding.CLIENT_SELECT, round_index)
    picked = rng.choice(len(clients), size=k, replace=False)
    return [clients[i] for i in sorted(picked)]


def run_round(server: ParameterServer, clients, testset, cfg):
    """Advance the federation by one full round.

    Every selected client downloads the global model and produces an upload;
    the server averages them, increments the round counter, and validates on
    the held-out test set. The gate is updated from this round's accuracy, so
    a latch takes effect from the next round on.

    Returns (record, snapshots): the evaluation row and, on attacking rounds,
    the reconstruction images handed back for export.
    """
    round_index = server.round
    participants = select_participants(clients, cfg, round_index)
    uploads = []
    ids = []
    attacked = False
    adversary = None
    for client in participants:
        if client.role == BENIGN:
            uploads.append(benign_local_update(client, server.global_params,
                                               cfg, round_index))
        else:
            adversary = client.adversary
            if server.gate.latched:
                uploads.append(adversary_local_update(
                    client.adversary, server.global_params, cfg.adversary_samples))
                attacked = True
            else:
                # nothing to train on before the gate opens
                uploads.append(server.global_params.clone())
        ids.append(client.client_id)
    server.global_params = aggregate(uploads, ids)
    server.round = round_index + 1

    accuracy, precision, recall, f1, aucs, _ = evaluate_global(
        server.global_params, testset)

    distance = None
    snapshots = None
    if attacked and adversary is not None:
        rng = seeding.child_rng(cfg.master_seed, seeding.SNAPSHOT, round_index)
        snapshots = snapshot_reconstruction(adversary, cfg.snapshot_samples, rng)
        target = _find_target_partition(clients, adversary.target_class)
        if target is not None:
            distance = reconstruction_distance(snapshots, target)

    server.gate.update(accuracy)
    record = RoundRecord(round=server.round, accuracy=accuracy,
                         macro_precision=precision, macro_recall=recall, f1=f1,
                         per_class_auc=aucs, reconstruction_distance=distance)
    return record, snapshots
