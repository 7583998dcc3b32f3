"""Experiment orchestration: config parsing, scenario construction, the round
loop with attack gating, and all on-disk artifacts (manifest, metrics CSV, ROC
CSV, reconstruction PGMs, checkpoints).
"""

from __future__ import annotations

import csv
import dataclasses
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import seeding
from .attack import AdversaryState, sample_noise
from .data import NUM_DATA_CLASSES, load_dataset, partition_by_class
from .errors import CheckpointError, ConfigError, DataError
from .federation import (ADVERSARY, BENIGN, AttackGate, ClientState,
                         ParameterServer, evaluate_global, run_round)
from .models import ParamSet, generator_forward, init_adam, init_discriminator, init_generator
from .tensor import Tensor

import numpy as np

SCENARIOS = ("two_user", "eleven_user")
DATASETS = ("mnist", "fashion_mnist", "cifar10")
NOISE_DISTS = ("uniform", "gaussian")
EXPECTED_PAIRING = {"two_user": ("cifar10",),
                    "eleven_user": ("mnist", "fashion_mnist")}
DATA_DIR_ENV = "FEDLEAK_DATA_DIR"


@dataclass
class ExperimentConfig:
    """Full description of one run; defaults follow the reference setup."""

    scenario: str = "eleven_user"
    dataset: str = "mnist"
    target_class: int = 1
    rounds: int = 100
    attack_threshold: float = 0.90
    lr_discriminator: float = 0.005
    lr_generator: float = 0.001
    batch_size: int = 16
    local_epochs: int = 1
    gan_epochs: int = 500
    images_per_round: int = 50
    adversary_samples: int = 5000
    samples_per_class: int = 5000
    noise: str = "uniform"
    master_seed: int = 0
    data_dir: str = ""
    out_dir: str = "runs/out"
    # desk-scale knobs: 0 means "use everything"
    test_samples_per_class: int = 0
    clients_per_round: int = 0
    snapshot_samples: int = 16

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.noise not in NOISE_DISTS:
            raise ConfigError(f"noise must be one of {NOISE_DISTS}, got {self.noise!r}")
        if not 0 <= self.target_class < NUM_DATA_CLASSES:
            raise ConfigError(f"target_class must lie in [0, {NUM_DATA_CLASSES}), "
                              f"got {self.target_class}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.attack_threshold < 1.0:
            raise ConfigError(f"attack_threshold must lie in (0, 1), "
                              f"got {self.attack_threshold}")
        for key in ("lr_discriminator", "lr_generator"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        for key in ("batch_size", "local_epochs", "gan_epochs", "images_per_round",
                    "snapshot_samples"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        for key in ("adversary_samples", "samples_per_class",
                    "test_samples_per_class", "clients_per_round"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        if self.dataset not in EXPECTED_PAIRING[self.scenario]:
            warnings.warn(f"unusual pairing: scenario {self.scenario} with "
                          f"dataset {self.dataset}", stacklevel=2)


_FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, text: str):
    kind = _FIELDS[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None


def parse_config(path=None, overrides=None) -> ExperimentConfig:
    """Build a config from an optional `key = value` file plus overrides.

    Overrides (e.g. from CLI flags) win over file values. Unknown keys are
    rejected; the resolved data_dir falls back to $FEDLEAK_DATA_DIR.
    """
    values = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, "
                                  f"got {stripped!r}")
            key, _, text = stripped.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, text)
    for key, text in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"override: unknown key {key!r}")
        values[key] = _coerce(key, str(text))
    cfg = ExperimentConfig(**values)
    if not cfg.data_dir:
        cfg.data_dir = os.environ.get(DATA_DIR_ENV, "")
    cfg.validate()
    return cfg


def write_manifest(cfg: ExperimentConfig, path):
    """Record every resolved config value; the manifest is itself a loadable
    config file, so a run can be reproduced from it directly."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}"
             for f in dataclasses.fields(ExperimentConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# scenario construction


def _subsample_per_class(testset, per_class: int, rng):
    if per_class <= 0:
        return list(testset)
    by_class = {}
    for i, s in enumerate(testset):
        by_class.setdefault(s.label, []).append(i)
    picked = []
    for c in sorted(by_class):
        pool = by_class[c]
        order = rng.permutation(len(pool))[:per_class]
        picked.extend(pool[k] for k in order)
    return [testset[i] for i in sorted(picked)]


def build_experiment(cfg: ExperimentConfig):
    """Load data and wire up (server, clients, testset) for the scenario.

    eleven_user: ten benign clients owning classes 0..9 plus one adversary.
    two_user: one benign victim owning the target class plus the adversary.
    """
    if not cfg.data_dir:
        raise DataError(f"no data_dir configured and ${DATA_DIR_ENV} is unset")
    train, test = load_dataset(cfg.dataset, cfg.data_dir)
    partitions = partition_by_class(
        train, cfg.samples_per_class,
        seeding.child_rng(cfg.master_seed, seeding.PARTITION))
    testset = _subsample_per_class(
        test, cfg.test_samples_per_class,
        seeding.child_rng(cfg.master_seed, seeding.TEST_SUBSET))

    global_params = init_discriminator(
        seeding.child_rng(cfg.master_seed, seeding.GLOBAL_INIT))
    generator = init_generator(
        seeding.child_rng(cfg.master_seed, seeding.GENERATOR_INIT))
    adversary = AdversaryState(
        target_class=cfg.target_class,
        generator=generator,
        generator_opt=init_adam(generator, cfg.lr_generator),
        lr_discriminator=cfg.lr_discriminator,
        lr_generator=cfg.lr_generator,
        gan_epochs=cfg.gan_epochs,
        gan_batch=cfg.batch_size,
        noise_dist=cfg.noise,
        noise_rng=seeding.child_rng(cfg.master_seed, seeding.ADVERSARY_NOISE))

    clients = []
    if cfg.scenario == "eleven_user":
        for c in range(NUM_DATA_CLASSES):
            if c not in partitions:
                raise DataError(f"dataset has no samples of class {c}")
            clients.append(ClientState(client_id=c, role=BENIGN,
                                       partition=partitions[c]))
        clients.append(ClientState(client_id=NUM_DATA_CLASSES, role=ADVERSARY,
                                   adversary=adversary))
    else:
        if cfg.target_class not in partitions:
            raise DataError(f"dataset has no samples of class {cfg.target_class}")
        clients.append(ClientState(client_id=0, role=BENIGN,
                                   partition=partitions[cfg.target_class]))
        clients.append(ClientState(client_id=1, role=ADVERSARY,
                                   adversary=adversary))

    server = ParameterServer(global_params=global_params,
                             gate=AttackGate(cfg.attack_threshold))
    return server, clients, testset


# ---------------------------------------------------------------------------
# artifacts

CSV_HEADER = (["round", "accuracy", "macro_precision", "macro_recall", "f1"]
              + [f"auc_c{c}" for c in range(NUM_DATA_CLASSES)]
              + ["recon_distance"])


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _csv_row(record) -> list:
    return ([str(record.round), _fmt(record.accuracy), _fmt(record.macro_precision),
             _fmt(record.macro_recall), _fmt(record.f1)]
            + [_fmt(a) for a in record.per_class_auc]
            + [_fmt(record.reconstruction_distance)])


def export_pgm(image: Tensor, path):
    """Write a (1, 28, 28) image in [-1, 1] as a binary PGM (P5, maxval 255)."""
    v = image.view()[0]
    payload = np.clip(np.round((v.astype(np.float64) + 1.0) * 127.5),
                      0, 255).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + payload.tobytes())


def export_roc(curves: dict, path):
    """One CSV of (class, fpr, tpr) rows for every per-class ROC curve."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "fpr", "tpr"])
        for c in sorted(curves):
            for fpr, tpr in curves[c]:
                writer.writerow([str(c), repr(fpr), repr(tpr)])


CHECKPOINT_MAGIC = b"FLGM"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ParamSet, path):
    """Serialize a parameter set; the round trip is bitwise lossless."""
    buf = bytearray(CHECKPOINT_MAGIC)
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(params))
    for name, t in params.items():
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", len(t.shape))
        for extent in t.shape:
            buf += struct.pack("<I", extent)
        buf += t.data.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path, expect_like: ParamSet = None) -> ParamSet:
    """Read a checkpoint back; validates the header and, when expect_like is
    given, that names and shapes match that architecture."""
    blob = Path(path).read_bytes()
    pos = 0

    def need(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"{path}: truncated while reading {what} "
                                  f"at byte {pos}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if need(4, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack("<H", need(2, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack("<I", need(4, "tensor count"))
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", need(1, "rank"))
        shape = struct.unpack(f"<{rank}I", need(4 * rank, "shape"))
        size = 1
        for e in shape:
            size *= e
        data = np.frombuffer(need(4 * size, f"{name} payload"), dtype="<f4")
        entries.append((name, Tensor(shape, data)))
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    loaded = ParamSet(entries)
    if expect_like is not None and not loaded.same_shapes(expect_like):
        raise CheckpointError(f"{path}: tensor names/shapes {loaded.shapes()} "
                              f"do not match the expected architecture")
    return loaded


# ---------------------------------------------------------------------------
# the experiment loop


def _wrap_round_error(round_number: int, err: Exception):
    try:
        wrapped = type(err)(f"round {round_number}: {err}")
    except TypeError:
        return err
    return wrapped


def run_experiment(cfg: ExperimentConfig, verbose: bool = False):
    """Execute a full run and write every artifact into cfg.out_dir.

    Produces manifest.txt, metrics.csv (one row per round), a ROC CSV at the
    gate round and the final round, a reconstruction PGM for every attacking
    round, and final checkpoints of the global model and the generator.
    Returns the list of RoundRecords.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out / "manifest.txt")

    server, clients, testset = build_experiment(cfg)
    records = []
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in range(cfg.rounds):
            was_latched = server.gate.latched
            try:
                record, snapshots = run_round(server, clients, testset, cfg)
            except Exception as err:
                raise _wrap_round_error(r + 1, err) from err
            records.append(record)
            writer.writerow(_csv_row(record))
            fh.flush()
            if snapshots:
                export_pgm(snapshots[0], out / f"recon_r{record.round}.pgm")
            if server.gate.latched and not was_latched:
                _, _, _, _, _, curves = evaluate_global(server.global_params, testset)
                export_roc(curves, out / f"roc_round{record.round}.csv")
            if verbose:
                dist = ("-" if record.reconstruction_distance is None
                        else f"{record.reconstruction_distance:.4f}")
                print(f"round {record.round}/{cfg.rounds} "
                      f"acc={record.accuracy:.4f} f1={record.f1:.4f} dist={dist}",
                      flush=True)

    final_roc = out / f"roc_round{records[-1].round}.csv"
    if not final_roc.exists():
        _, _, _, _, _, curves = evaluate_global(server.global_params, testset)
        export_roc(curves, final_roc)
    save_checkpoint(server.global_params, out / "checkpoint_global.flgm")
    for client in clients:
        if client.role == ADVERSARY:
            save_checkpoint(client.adversary.generator,
                            out / "checkpoint_generator.flgm")
    return records


def export_reconstructions(checkpoint_path, target_class: int, count: int,
                           out_dir, seed: int = 0):
    """Generate images from a saved generator checkpoint and write PGMs."""
    params = load_checkpoint(checkpoint_path)
    if "fc.weight" not in params:
        raise CheckpointError(f"{checkpoint_path}: not a generator checkpoint")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = seeding.child_rng(seed, seeding.SNAPSHOT, target_class)
    noise = sample_noise(rng, count, dim=params["fc.weight"].shape[1])
    paths = []
    for i, z in enumerate(noise):
        image, _ = generator_forward(params, z)
        path = out / f"recon_target{target_class}_{i:03d}.pgm"
        export_pgm(image, path)
        paths.append(path)
    return paths
