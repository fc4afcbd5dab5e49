"""Experiment orchestration: sequential-task continual training, baselines,
SNR-sweep evaluation, forgetting metrics, and result serialization.

Randomness is organized as named child streams of one master seed (model
init, batch order, buffer decisions, per-(task, snr) evaluation noise), so
two method configurations that perform the same arithmetic produce
bit-identical trajectories: the degenerate settings (replay with lambda=1
and no capacity, zero-alpha consolidation, zero-beta importance, zero
distillation weight) replicate naive fine-tuning exactly.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace, asdict
from pathlib import Path

import numpy as np

from .channel import generate_dataset
from .errors import ConfigError, DataError, DivergenceError
from .lwf import advance_teacher
from .models import (OptimConfig, PredictorConfig, make_backbone, nmse_head,
                     pack_targets, pack_windows, sgd_step)
from .numerics import awgn_corrupt, to_db
from .regularization import EwcState, SiState, end_task_ewc, ewc_penalty, si_accumulate, si_consolidate, si_penalty
from .replay import Experience, ReplayBuffer, compose_batch
from .scenarios import get_preset

METHODS = ("naive", "er-reservoir", "er-lars", "ewc", "si", "lwf", "joint", "zero-shot")

__all__ = [
    "ExperimentConfig",
    "MetricsRecord",
    "TaskData",
    "build_task_data",
    "windows_from_tensor",
    "task_data_from_file",
    "run_continual",
    "run_baseline",
    "run_many",
    "run_ablation_grid",
    "snr_sweep_eval",
    "forgetting",
    "export_results",
    "import_results",
    "pivot_table",
    "load_experiment_file",
    "build_experiment_config",
    "parse_snr_grid",
    "METHODS",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment family."""

    method: str = "naive"
    backbone: str = "gru"
    seq_len: int = 32
    buffer_capacity: int = 5000
    mix_lambda: float = 0.5
    ewc_alpha: float = 800.0
    si_beta: float = 0.6
    si_xi: float = 0.3
    lars_epsilon: float = 1e-8
    lwf_variant: str = "convex"
    learning_rate: float = 3.0
    clip_norm: float = 0.2
    batch_size: int = 32
    epochs: int = 40
    tasks: tuple = ("umi-compact", "umi-dense", "umi-standard")
    train_task: str = "umi-dense"
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    seeds: tuple = (0,)
    n_users: int = 64
    windows_per_user: int = 10
    eval_windows_per_user: int = 8
    test_fraction: float = 0.2
    full_scale: bool = False
    n_layers: int = 3
    d_hid: int = 32
    d_model: int = 128
    n_heads: int = 4
    fisher_batch_size: int = 1
    fisher_windows_per_user: int = 4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method '{self.method}' (known: {', '.join(METHODS)})")
        if not self.tasks:
            raise ConfigError("task sequence must be nonempty")
        if not 0.0 <= self.mix_lambda <= 1.0:
            raise ConfigError("mix_lambda must lie in [0, 1]")
        if self.ewc_alpha < 0 or self.si_beta < 0 or self.si_xi <= 0 or self.lars_epsilon <= 0:
            raise ConfigError("regularizer hyperparameters out of range")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("training hyperparameters out of range")
        if self.buffer_capacity < 0:
            raise ConfigError("buffer capacity must be >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.lwf_variant not in ("convex", "additive"):
            raise ConfigError("lwf_variant must be 'convex' or 'additive'")

    def predictor_config(self, d_in) -> PredictorConfig:
        return PredictorConfig(backbone=self.backbone, d_in=d_in, seq_len=self.seq_len,
                               n_layers=self.n_layers, d_hid=self.d_hid,
                               d_model=self.d_model, n_heads=self.n_heads)


@dataclass
class MetricsRecord:
    """All measurements of one (method, seed) run, JSON-round-trippable."""

    method: str
    backbone: str
    seq_len: int
    buffer_capacity: int
    seed: int
    tasks: list
    stages: list
    eval_matrix_db: dict      # task -> [nmse_db after each trained stage]
    end_of_task_db: dict      # task -> nmse_db right after its own training
    final_db: dict            # task -> nmse_db after the whole sequence
    forgetting_db: dict       # task -> final - end_of_task
    snr_nmse_db: dict         # task -> {snr_key -> nmse_db}
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MetricsRecord":
        return cls(**d)

    def comparable(self) -> dict:
        """Everything except identifiers and timing, for equivalence checks."""
        d = self.to_dict()
        for key in ("method", "wall_clock_s"):
            d.pop(key)
        return d


def _snr_key(snr) -> str:
    return "inf" if math.isinf(snr) else f"{float(snr):g}"


# --- data preparation --------------------------------------------------------


@dataclass
class TaskData:
    """One scenario's normalized tensor plus its train/test user split.

    Training windows are streamed: every epoch draws fresh (user, start)
    pairs from the caller's RNG, mimicking measurements arriving
    continuously, so the replay buffer sees far more distinct samples than
    it can hold.  Evaluation windows are a fixed grid on held-out users.
    """

    name: str
    tensor: np.ndarray          # (T, rb, tx, rx, users) complex128, unit RMS
    n_train_users: int
    eval_windows: np.ndarray    # (N, seq, rb, tx, rx)
    eval_targets: np.ndarray    # (N, rb, tx, rx)
    seq_len: int
    scale: float
    spatial_shape: tuple

    @property
    def n_starts(self) -> int:
        return self.tensor.shape[0] - self.seq_len

    def cut(self, users, starts):
        """Materialize windows/targets for parallel (user, start) arrays."""
        seq = self.seq_len
        wins = np.stack([self.tensor[s:s + seq, ..., u] for u, s in zip(users, starts)])
        tgts = np.stack([self.tensor[starts[i] + seq, ..., users[i]]
                         for i in range(len(users))])
        return wins, tgts

    def sample_train(self, n, rng):
        """Draw n fresh training windows (train-side users only)."""
        users = rng.integers(0, self.n_train_users, size=n)
        starts = rng.integers(0, self.n_starts, size=n)
        return self.cut(users, starts)

    def fixed_train_grid(self, per_user):
        """Deterministic train-side window grid (consolidation sweeps)."""
        grid = np.unique(np.linspace(0, self.n_starts - 1,
                                     min(per_user, self.n_starts)).astype(int))
        users = np.repeat(np.arange(self.n_train_users), len(grid))
        starts = np.tile(grid, self.n_train_users)
        return self.cut(users, starts)


def _task_seed(seed, name, salt=0x5EED):
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), salt]).generate_state(1)[0])


def windows_from_tensor(name, tensor, seq_len, test_fraction, eval_windows_per_user) -> TaskData:
    """Normalize a raw channel tensor and prepare train/eval window views.

    Users are split into train/test identities (test users come last);
    the channel scale is the train-side RMS so task statistics, not raw
    power, differentiate scenarios.
    """
    tensor = np.asarray(tensor).astype(np.complex128)
    steps = tensor.shape[0]
    if steps <= seq_len + 1:
        raise DataError(f"{name}: {steps} snapshots cannot host windows of length {seq_len}")
    n_users = tensor.shape[-1]
    n_test = max(1, int(round(n_users * test_fraction)))
    n_train = n_users - n_test
    if n_train < 1:
        raise DataError(f"{name}: no training users left after split")
    scale = math.sqrt(float(np.mean(np.abs(tensor[..., :n_train]) ** 2)))
    if scale <= 0:
        raise DataError(f"{name}: zero-energy channel tensor")
    tensor = tensor / scale

    n_starts = steps - seq_len
    eval_grid = np.unique(np.linspace(0, n_starts - 1,
                                      min(eval_windows_per_user, n_starts)).astype(int))
    eval_users = np.repeat(np.arange(n_train, n_users), len(eval_grid))
    eval_starts = np.tile(eval_grid, n_users - n_train)
    data = TaskData(name=name, tensor=tensor, n_train_users=n_train,
                    eval_windows=np.zeros(0), eval_targets=np.zeros(0),
                    seq_len=seq_len, scale=scale, spatial_shape=tuple(tensor.shape[1:4]))
    data.eval_windows, data.eval_targets = data.cut(eval_users, eval_starts)
    return data


def build_task_data(name, config: ExperimentConfig, seed) -> TaskData:
    """Generate one scenario and prepare its window views."""
    scen = get_preset(name, desk=not config.full_scale)
    data_seed = _task_seed(seed, name)
    dataset = generate_dataset(scen, config.n_users, data_seed)
    return windows_from_tensor(name, dataset.tensor, config.seq_len,
                               config.test_fraction, config.eval_windows_per_user)


def task_data_from_file(prefix, seq_len, test_fraction=0.2, eval_windows_per_user=8) -> TaskData:
    """Window view over a dataset file written by the generator."""
    from .channel import read_dataset
    ds = read_dataset(prefix)
    return windows_from_tensor(ds.scenario.name, ds.tensor, seq_len,
                               test_fraction, eval_windows_per_user)


class _JointData:
    """Round-robin streaming over several tasks for the joint baseline."""

    def __init__(self, datas):
        self.datas = list(datas)
        self.name = "joint"
        self.n_train_users = sum(d.n_train_users for d in self.datas)

    def sample_train(self, n, rng):
        which = rng.integers(0, len(self.datas), size=n)
        wins, tgts = [], []
        for k, d in enumerate(self.datas):
            count = int(np.sum(which == k))
            if count:
                w, t = d.sample_train(count, rng)
                wins.append(w)
                tgts.append(t)
        return np.concatenate(wins), np.concatenate(tgts)

    def fixed_train_grid(self, per_user):
        pairs = [d.fixed_train_grid(per_user) for d in self.datas]
        return (np.concatenate([p[0] for p in pairs]),
                np.concatenate([p[1] for p in pairs]))


# --- evaluation ---------------------------------------------------------------


def _eval_nmse(model, theta, data: TaskData, snr_db=math.inf, rng=None):
    """Mean NMSE ratio on the held-out windows, optionally noise-corrupted.

    Noise lands on the observed history only; targets stay clean.
    """
    windows = data.eval_windows
    if not math.isinf(snr_db):
        windows = awgn_corrupt(windows, snr_db, rng)
    feats = pack_windows(windows)
    y, _ = model.forward(theta, feats)
    loss, _, _ = nmse_head(y, pack_targets(data.eval_targets))
    return loss


def snr_sweep_eval(theta, data: TaskData, snr_grid_db, seed, pcfg: PredictorConfig):
    """NMSE-vs-SNR curve for one trained model on one task.

    The noise stream is derived from (seed, task, snr) only, so sweeping
    two models under the same seed uses identical noise realizations.
    """
    model = make_backbone(pcfg)
    out = []
    for snr in snr_grid_db:
        if math.isinf(snr):
            rng = None
        else:
            rng = np.random.default_rng(np.random.SeedSequence(
                [int(seed), zlib.crc32(data.name.encode()), int(round(float(snr) * 1000)) & 0xFFFFFFFF, 0xEA7]))
        ratio = _eval_nmse(model, theta, data, snr, rng)
        out.append((float(snr), float(to_db(ratio))))
    return out


# --- the trainer ---------------------------------------------------------------


def _progress(verbose, **kv):
    if verbose:
        print("eval " + " ".join(f"{k}={v}" for k, v in kv.items()), flush=True)


class _FisherModel:
    """Adapter giving the consolidation sweep per-sample loss gradients.

    ``theta`` arrives as the flat vector the regularizer state stores; it
    is rebuilt into named blocks before each forward.
    """

    def __init__(self, model, feats, tvecs):
        self.model = model
        self.feats = feats
        self.tvecs = tvecs

    def loss_and_grad(self, theta, batch):
        from .models.params import ParameterVector
        pv = theta if isinstance(theta, ParameterVector) else ParameterVector(
            self.model.param_spec(), theta)
        idx = np.asarray(batch, dtype=int)
        y, cache = self.model.forward(pv, self.feats[idx], want_cache=True)
        loss, dy, _ = nmse_head(y, self.tvecs[idx])
        return loss, self.model.backward(pv, cache, dy)


def run_continual(config: ExperimentConfig, seed=None, verbose=False,
                  return_model=False):
    """Train through the task sequence with the configured method's hooks.

    Evaluates every task after each stage (noiseless) and sweeps the SNR
    grid on the final model.  Deterministic in (config, seed).  With
    ``return_model`` the trained parameters and their architecture are
    returned alongside the record.
    """
    if seed is None:
        seed = config.seeds[0]
    started = time.time()

    task_names = list(config.tasks)
    data = {name: build_task_data(name, config, seed) for name in task_names}
    if config.method == "zero-shot":
        stages = [config.train_task]
        if config.train_task not in data:
            data[config.train_task] = build_task_data(config.train_task, config, seed)
    elif config.method == "joint":
        data["joint"] = _JointData([data[n] for n in task_names])
        stages = ["joint"]
    else:
        stages = task_names

    d_in = 2 * int(np.prod(data[task_names[0]].spatial_shape))
    pcfg = config.predictor_config(d_in)
    model = make_backbone(pcfg)
    optim = OptimConfig(learning_rate=config.learning_rate,
                        batch_size=config.batch_size, clip_norm=config.clip_norm)

    root = np.random.SeedSequence([int(seed), 0xA11CE])
    init_ss, batch_ss, buffer_ss = root.spawn(3)
    rng_init = np.random.default_rng(init_ss)
    rng_batch = np.random.default_rng(batch_ss)
    rng_buffer = np.random.default_rng(buffer_ss)

    theta = model.init(rng_init)

    use_replay = config.method in ("er-reservoir", "er-lars")
    buffer = None
    ewc_state = None
    si_state = None
    teacher = None
    if use_replay:
        buffer = ReplayBuffer(config.buffer_capacity,
                              mode="lars" if config.method == "er-lars" else "uniform",
                              epsilon=config.lars_epsilon)
    elif config.method == "ewc":
        ewc_state = EwcState(alpha=config.ewc_alpha)
    elif config.method == "si":
        si_state = SiState.fresh(theta.flat, beta=config.si_beta, xi=config.si_xi)

    eval_matrix = {name: [] for name in task_names}

    for stage_idx, stage in enumerate(stages):
        tdata = data[stage]
        n = config.windows_per_user * tdata.n_train_users
        for _epoch in range(config.epochs):
            epoch_w, epoch_t = tdata.sample_train(n, rng_batch)
            for lo in range(0, n, config.batch_size):
                xw = epoch_w[lo:lo + config.batch_size]
                xt = epoch_t[lo:lo + config.batch_size]
                feats = pack_windows(xw)
                tvec = pack_targets(xt)

                if use_replay:
                    # Rehearsal anchors come from the buffer as it stood
                    # before this batch streamed in; the batch and anchors
                    # then share one forward/backward pass, with the mixed
                    # objective expressed through per-sample output weights.
                    _, rep_idx, picked = compose_batch(xw, buffer,
                                                       config.batch_size, rng_buffer)
                    n_cur = len(xw)
                    if picked:
                        rw = np.stack([e.window for e in picked])
                        rt = np.stack([e.target for e in picked])
                        feats = np.concatenate([feats, pack_windows(rw)])
                        tvec = np.concatenate([tvec, pack_targets(rt)])
                    y, cache = model.forward(theta, feats, want_cache=True)
                    err = y - tvec
                    denom = np.sum(tvec * tvec, axis=1)
                    if np.any(denom <= 0.0):
                        raise DivergenceError("zero-energy target in training batch")
                    per = np.sum(err * err, axis=1) / denom
                    dy = 2.0 * err / denom[:, None]
                    if picked:
                        lam = config.mix_lambda
                        n_rep = len(picked)
                        task_loss = (lam * float(np.mean(per[:n_cur]))
                                     + (1.0 - lam) * float(np.mean(per[n_cur:])))
                        dy[:n_cur] *= lam / n_cur
                        dy[n_cur:] *= (1.0 - lam) / n_rep
                        for j, bi in enumerate(rep_idx):
                            buffer.refresh_loss(int(bi), float(per[n_cur + j]))
                    else:
                        task_loss = float(np.mean(per))
                        dy /= n_cur
                    offers = [Experience(xw[i], xt[i], float(per[i]))
                              for i in range(n_cur)]
                    buffer.insert_many(offers, rng_buffer)
                    grad = model.backward(theta, cache, dy)
                else:
                    y, cache = model.forward(theta, feats, want_cache=True)
                    task_loss, dy, per_losses = nmse_head(y, tvec)
                    if config.method == "ewc":
                        if ewc_state.bank and ewc_state.alpha != 0.0:
                            _, pen_grad = ewc_penalty(theta.flat, ewc_state)
                            grad = model.backward(theta, cache, dy) + pen_grad
                        else:
                            grad = model.backward(theta, cache, dy)
                    elif config.method == "si":
                        grad_task = model.backward(theta, cache, dy)
                        grad = grad_task
                        if config.si_beta != 0.0 and np.any(si_state.omega):
                            _, pen_grad = si_penalty(theta.flat, si_state)
                            grad = grad_task + pen_grad
                        si_accumulate(si_state, grad_task, config.learning_rate)
                    elif config.method == "lwf":
                        kd_weight = ((1.0 - config.mix_lambda)
                                     if config.lwf_variant == "convex" else config.mix_lambda)
                        if teacher is not None and kd_weight != 0.0:
                            # Distillation shares the student's cached pass:
                            # combine the task and teacher-gap output
                            # gradients, then backpropagate once.
                            y_old, _ = model.forward(teacher.theta_old, feats)
                            kd_denom = np.sum(y_old * y_old, axis=1)
                            keep = kd_denom > 0.0
                            kd_err = np.where(keep[:, None], y - y_old, 0.0)
                            safe = np.where(keep, kd_denom, 1.0)
                            kept = max(int(np.sum(keep)), 1)
                            kd_per = np.sum(kd_err * kd_err, axis=1) / safe
                            kd_loss = float(np.sum(kd_per) / kept)
                            dy_kd = (2.0 / kept) * kd_err / safe[:, None]
                            if config.lwf_variant == "convex":
                                lam = config.mix_lambda
                                task_loss = lam * task_loss + (1.0 - lam) * kd_loss
                                dy = lam * dy + (1.0 - lam) * dy_kd
                            else:
                                task_loss = task_loss + kd_weight * kd_loss
                                dy = dy + kd_weight * dy_kd
                        grad = model.backward(theta, cache, dy)
                    else:
                        grad = model.backward(theta, cache, dy)

                if not np.all(np.isfinite(grad)):
                    raise DivergenceError(
                        f"non-finite gradient: method={config.method} stage={stage} seed={seed}")
                sgd_step(theta, grad, optim)

        if config.method == "ewc":
            fw, ft = tdata.fixed_train_grid(config.fisher_windows_per_user)
            tfeats = pack_windows(fw)
            ttvecs = pack_targets(ft)
            end_task_ewc(ewc_state, theta.flat,
                         list(range(len(tfeats))),
                         _FisherModel(model, tfeats, ttvecs),
                         task_id=stage, batch_size=config.fisher_batch_size)
        elif config.method == "si":
            si_consolidate(si_state, theta.flat)
        elif config.method == "lwf":
            teacher = advance_teacher(theta, pcfg)

        for name in task_names:
            ratio = _eval_nmse(model, theta, data[name])
            eval_matrix[name].append(float(to_db(ratio)))
            _progress(verbose, method=config.method, backbone=config.backbone,
                      seed=seed, stage=stage_idx, trained=stage, task=name,
                      snr="inf", nmse_db=f"{eval_matrix[name][-1]:.4f}")

    snr_nmse = {}
    for name in task_names:
        curve = snr_sweep_eval(theta, data[name], config.snr_grid_db, seed, pcfg)
        snr_nmse[name] = {_snr_key(s): v for s, v in curve}
        for s, v in curve:
            _progress(verbose, method=config.method, backbone=config.backbone,
                      seed=seed, stage="final", task=name,
                      snr=_snr_key(s), nmse_db=f"{v:.4f}")

    end_of_task = {}
    final = {}
    for name in task_names:
        final[name] = eval_matrix[name][-1]
        end_of_task[name] = (eval_matrix[name][stages.index(name)]
                             if name in stages else eval_matrix[name][-1])
    forget = {name: final[name] - end_of_task[name] for name in task_names}

    record = MetricsRecord(
        method=config.method, backbone=config.backbone, seq_len=config.seq_len,
        buffer_capacity=config.buffer_capacity, seed=int(seed),
        tasks=task_names, stages=stages, eval_matrix_db=eval_matrix,
        end_of_task_db=end_of_task, final_db=final, forgetting_db=forget,
        snr_nmse_db=snr_nmse, wall_clock_s=time.time() - started)
    if return_model:
        return record, theta, pcfg
    return record


def run_baseline(config: ExperimentConfig, seed=None, verbose=False) -> MetricsRecord:
    """Zero-shot (single-task training) or joint (pooled) baseline run."""
    if config.method not in ("zero-shot", "joint", "naive"):
        raise ConfigError(f"'{config.method}' is not a baseline method")
    return run_continual(config, seed=seed, verbose=verbose)


def _run_one(args):
    config, seed, verbose = args
    return run_continual(config, seed=seed, verbose=verbose)


def run_many(configs_and_seeds, threads=1, verbose=False):
    """Execute (config, seed) runs, optionally process-parallel.

    Results are returned sorted by (method, backbone, seq_len, buffer,
    seed) regardless of completion order, and each run's record is
    independent of ``threads``.
    """
    jobs = [(cfg, seed, verbose) for cfg, seed in configs_and_seeds]
    if threads <= 1:
        records = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_one, jobs))
    records.sort(key=lambda r: (r.method, r.backbone, r.seq_len, r.buffer_capacity, r.seed))
    return records


def run_ablation_grid(base: ExperimentConfig, seeds=None, threads=1, verbose=False):
    """Hyperparameter sensitivity grid: sequence length and buffer size.

    Covers every continual method at seq_len 16 and 32 (buffer 5000), plus
    the replay variants at the reduced 3000-sample buffer (seq_len 32).
    """
    seeds = tuple(seeds) if seeds is not None else base.seeds
    jobs = []
    for method in ("er-lars", "er-reservoir", "ewc", "si", "lwf"):
        for seq_len in (16, 32):
            cfg = replace(base, method=method, seq_len=seq_len, buffer_capacity=5000)
            jobs += [(cfg, s) for s in seeds]
    for method in ("er-lars", "er-reservoir"):
        cfg = replace(base, method=method, seq_len=32, buffer_capacity=3000)
        jobs += [(cfg, s) for s in seeds]
    return run_many(jobs, threads=threads, verbose=verbose)


# --- metrics post-processing ---------------------------------------------------


def forgetting(record: MetricsRecord) -> dict:
    """Final minus end-of-task NMSE (dB) per task; positive = forgot."""
    out = {}
    for name in record.tasks:
        series = record.eval_matrix_db.get(name)
        if not series:
            raise DataError(f"record is missing evaluations for task '{name}'")
        if name in record.stages:
            anchor = series[record.stages.index(name)]
        else:
            anchor = series[-1]
        out[name] = series[-1] - anchor
    return out


_CSV_COLUMNS = ("method", "backbone", "seq_len", "buffer", "task",
                "snr_db", "seed", "nmse_db", "forgetting_db")


def export_results(records, path, fmt="csv"):
    """Write records as CSV rows (one per task x snr cell) or full JSON."""
    records = [records] if isinstance(records, MetricsRecord) else list(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump({"records": [r.to_dict() for r in records]}, fh, indent=1)
        return path
    if fmt != "csv":
        raise ConfigError(f"unknown export format '{fmt}'")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for rec in records:
            for task in rec.tasks:
                for key, value in rec.snr_nmse_db[task].items():
                    writer.writerow([rec.method, rec.backbone, rec.seq_len,
                                     rec.buffer_capacity, task, key, rec.seed,
                                     repr(value), repr(rec.forgetting_db[task])])
    return path


def import_results(path):
    """Read back a JSON export; identical to the records that produced it."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such results file: {path}")
    with open(path) as fh:
        payload = json.load(fh)
    return [MetricsRecord.from_dict(d) for d in payload["records"]]


def pivot_table(csv_path, snr=None):
    """Method x task x backbone median-NMSE pivot from an exported CSV.

    ``snr`` selects the column (string key, e.g. "30" or "inf"); default is
    the highest finite SNR present.  Returns the rendered table string.
    """
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    if not rows:
        raise DataError(f"{csv_path}: no data rows")
    if snr is None:
        finite = sorted({float(r["snr_db"]) for r in rows if r["snr_db"] != "inf"})
        snr = f"{finite[-1]:g}" if finite else "inf"
    cells = {}
    for row in rows:
        if row["snr_db"] != snr:
            continue
        key = (row["method"], row["backbone"], row["task"])
        cells.setdefault(key, []).append(float(row["nmse_db"]))
    if not cells:
        raise DataError(f"{csv_path}: no rows at snr={snr}")
    methods = sorted({k[0] for k in cells})
    backbones = sorted({k[1] for k in cells})
    tasks = sorted({k[2] for k in cells})
    lines = [f"median NMSE [dB] at snr={snr}"]
    header = "method/backbone".ljust(28) + "".join(t.rjust(18) for t in tasks)
    lines.append(header)
    for method in methods:
        for backbone in backbones:
            vals = []
            for task in tasks:
                xs = cells.get((method, backbone, task))
                vals.append(f"{float(np.median(xs)):.3f}" if xs else "-")
            lines.append((f"{method}/{backbone}").ljust(28) + "".join(v.rjust(18) for v in vals))
    return "\n".join(lines)


# --- config files ---------------------------------------------------------------


def parse_snr_grid(text):
    """Parse "start:stop:step" (inclusive of stop when aligned) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad SNR range '{text}' (want start:stop:step)")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("SNR step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(max(count, 1)))
    return tuple(float(p) for p in text.split(",") if p.strip())


def _coerce(name, kind, raw):
    if isinstance(raw, kind) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {name}: '{text}'")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is tuple:
        if name == "snr_grid_db":
            return parse_snr_grid(text)
        if name == "seeds":
            return tuple(int(p) for p in text.split(",") if p.strip())
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def load_experiment_file(path) -> dict:
    """Flat key/value sections; keys from any section share one namespace."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    merged = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            merged[key] = value
    return merged


def build_experiment_config(file_values=None, overrides=None) -> ExperimentConfig:
    """Merge config-file values and flag overrides onto the defaults.

    Overrides win over file values; unknown keys are rejected.
    """
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    kinds = {}
    for f in fields(ExperimentConfig):
        kinds[f.name] = type(getattr(ExperimentConfig(), f.name))
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown experiment option '{key}'")
            merged[key] = _coerce(key, kinds[key], value)
    return ExperimentConfig(**merged)
