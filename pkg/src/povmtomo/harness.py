"""Experiment driver behind the CLI: data generation, training, evaluation,
sample-complexity sweeps, reconstruction.

Training follows the protocol used for the sample-complexity figures:
snapshots are taken every `checkpoint_every` fraction of an epoch together
with a held-out NLL; after training, the `n_model_avg` snapshots nearest
the best-validation snapshot are each scored by Monte-Carlo classical
fidelity against the exact reference distribution, and the sweep reports
their mean and standard deviation.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, StateSpec
from .datafiles import config_hash, read_dataset, save_model, write_dataset, write_metrics_csv
from .dense import HamiltonianSpec, ghz_ket, ground_state, ket_to_density
from .errors import DivergenceError, FormatError, SizeGuardError
from .estimation import classical_fidelity, classical_fidelity_exact, kl_divergence_exact, model_table
from .models import Adam, GRUStack, MultinomialRBM
from .povm import make_povm, table_from_ket
from .sampling import ket_ref_log_prob, sample_from_ket
from .seeding import derive_rng
from .tensornet import build_transfer_cache, depolarized_ghz_mpo, exact_log_prob, ghz_mps, sample_from_cache


# ---------------------------------------------------------------------------
# reference states
# ---------------------------------------------------------------------------


@dataclass
class Reference:
    """Exact reference distribution plus enough state to sample/evaluate it."""

    spec: StateSpec
    povm_id: str
    n_qubits: int
    log_prob: object  # callable (B, N) -> (B,)
    sampler: object  # callable (n, seed) -> (outcomes, logp)
    generator: str
    extra: dict
    dense_rho: object = None  # callable () -> density matrix (small N only)


def build_reference(state: StateSpec, povm_id: str, seed: int) -> Reference:
    povm = make_povm(povm_id)
    if state.kind == "ghz":
        if state.p == 0.0:
            tn_state = ghz_mps(state.n)
            generator = "mps-chain-rule"
        else:
            tn_state = depolarized_ghz_mpo(state.n, state.p)
            generator = "mpo-chain-rule"
        cache = build_transfer_cache(tn_state, povm)
        dense = None
        if state.n <= 8:
            def dense():
                rho = ket_to_density(ghz_ket(state.n))
                if state.p > 0.0:
                    from .dense import depolarize

                    rho = depolarize(rho, state.p)
                return rho

        return Reference(
            spec=state,
            povm_id=povm_id,
            n_qubits=state.n,
            log_prob=lambda outcomes: exact_log_prob(cache, None, outcomes),
            sampler=lambda n, s: sample_from_cache(cache, n, s),
            generator=generator,
            extra={},
            dense_rho=dense,
        )

    if state.kind == "tfim":
        spec = HamiltonianSpec.tfim(state.n, J=state.j, h=state.h, boundary=state.boundary)
    else:
        spec = HamiltonianSpec.heisenberg_triangular(state.l, boundary=state.boundary)
    ket, energy = ground_state(spec, seed=seed)
    dense = None
    if spec.N <= 8:
        def dense():
            return ket_to_density(ket)

    return Reference(
        spec=state,
        povm_id=povm_id,
        n_qubits=spec.N,
        log_prob=ket_ref_log_prob(ket, povm),
        sampler=lambda n, s: sample_from_ket(ket, povm, n, s),
        generator="dense-conditional",
        extra={"ground_energy": energy},
        dense_rho=dense,
    )


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(config: ExperimentConfig, out_dir: str) -> str:
    if config.n_samples < 1:
        raise FormatError("config.n_samples must be set for gen-data")
    ref = build_reference(config.state, config.povm, config.seed)
    outcomes, _ = ref.sampler(config.n_samples, derived_seed(config.seed, "gen-data"))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "dataset.bin")
    cfg_hash = config_hash(config.to_dict())
    povm = make_povm(config.povm)
    write_dataset(
        path,
        outcomes,
        povm_id=config.povm,
        m=povm.m,
        state=_state_dict(config.state),
        seed=config.seed,
        generator=ref.generator,
        cfg_hash=cfg_hash,
        extra=ref.extra,
    )
    return path


def _state_dict(state: StateSpec) -> dict:
    from dataclasses import asdict

    return asdict(state)


def derived_seed(seed: int, label: str) -> int:
    return int(derive_rng(seed, label).integers(0, 2**63 - 1))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class Snapshot:
    index: int
    epoch: float
    val_nll: float
    params: list


@dataclass
class TrainResult:
    model: object
    snapshots: list
    best_index: int
    metrics_rows: list
    fc_per_snapshot: list  # (snapshot_index, EstimatorResult), window only
    fc_mean: float
    fc_sd: float


def build_model(config: ExperimentConfig, n_qubits: int, m: int):
    if config.model.kind == "gru":
        return GRUStack(n_qubits, m, hidden=config.model.hidden, seed=config.seed)
    n_hidden = config.model.n_hidden or 2 * n_qubits
    return MultinomialRBM(n_qubits, m, n_hidden, seed=config.seed)


def train_model(config: ExperimentConfig, data: np.ndarray, reference: Reference | None,
                fc_samples: int = 0) -> TrainResult:
    """Minibatch training with snapshot selection on held-out NLL.

    fc_samples > 0 scores the selected snapshot window by Monte-Carlo
    classical fidelity against `reference` (needed by sweeps and the
    training metrics CSV).
    """
    tcfg = config.training
    n_qubits = data.shape[1]
    m = make_povm(config.povm).m
    if data.shape[0] < 1:
        raise FormatError("dataset is empty")

    rng = derive_rng(config.seed, "train")
    perm = rng.permutation(data.shape[0])
    n_val = min(int(math.ceil(tcfg.val_fraction * data.shape[0])), tcfg.val_max_samples)
    n_val = min(n_val, data.shape[0] - 1)
    val = data[perm[:n_val]] if n_val > 0 else data[perm[:1]]
    train = data[perm[n_val:]]

    model = build_model(config, n_qubits, m)
    is_gru = isinstance(model, GRUStack)
    opt = Adam(
        model.parameters,
        lr=tcfg.lr,
        beta1=tcfg.beta1,
        beta2=tcfg.beta2,
        clip_norm=tcfg.clip_norm if is_gru else 0.0,
    )
    cd_rng = derive_rng(config.seed, "train_cd")

    n_train = train.shape[0]
    B = min(tcfg.batch_size, n_train)
    batches_per_epoch = max(n_train // B, 1)
    ckpt_stride = max(int(round(tcfg.checkpoint_every * batches_per_epoch)), 1)

    def val_nll() -> float:
        if is_gru:
            return model.mean_nll(val)
        return float(-model.log_prob(val).mean())

    snapshots = []
    metrics_rows = []
    cfg_hash = config_hash(config.to_dict())
    step = 0
    for epoch in range(tcfg.epochs):
        order = rng.permutation(n_train)
        epoch_nll = 0.0
        seen = 0
        for bi in range(batches_per_epoch):
            batch = train[order[bi * B : (bi + 1) * B]]
            if is_gru:
                nll, grads = model.nll_and_grad(batch)
                opt.step(grads)
                if not np.isfinite(nll):
                    raise DivergenceError(f"non-finite NLL at epoch {epoch}, batch {bi}")
                epoch_nll += nll * batch.shape[0]
                seen += batch.shape[0]
            else:
                model.cd_update(batch, tcfg.cd_k, opt, cd_rng)
            step += 1
            if step % ckpt_stride == 0:
                snapshots.append(
                    Snapshot(
                        index=len(snapshots),
                        epoch=epoch + (bi + 1) / batches_per_epoch,
                        val_nll=val_nll(),
                        params=model.copy_parameters(),
                    )
                )
                metrics_rows.append(
                    (f"val_nll@{snapshots[-1].epoch:.3f}", snapshots[-1].val_nll, None, n_val, cfg_hash)
                )
        if is_gru and seen:
            metrics_rows.append((f"train_nll@{epoch + 1}", epoch_nll / seen, None, seen, cfg_hash))
        opt.lr *= tcfg.lr_decay

    if not snapshots:
        snapshots.append(
            Snapshot(index=0, epoch=float(tcfg.epochs), val_nll=val_nll(), params=model.copy_parameters())
        )
    best = min(snapshots, key=lambda s: s.val_nll)
    model.set_parameters(best.params)

    fc_rows = []
    fc_mean = math.nan
    fc_sd = math.nan
    if fc_samples > 0 and reference is not None and is_gru:
        window = select_window(snapshots, best.index, tcfg.n_model_avg)
        means = []
        for snap in window:
            model.set_parameters(snap.params)
            res = classical_fidelity(
                model, reference.log_prob, fc_samples, derived_seed(config.seed, f"fc{snap.index}")
            )
            fc_rows.append((snap.index, res))
            means.append(res.mean)
            metrics_rows.append((f"fc_mc@{snap.epoch:.3f}", res.mean, res.stderr, fc_samples, cfg_hash))
        fc_mean = float(np.mean(means))
        fc_sd = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
        metrics_rows.append(("fc_model_avg", fc_mean, fc_sd, fc_samples * len(means), cfg_hash))
        model.set_parameters(best.params)

    return TrainResult(
        model=model,
        snapshots=snapshots,
        best_index=best.index,
        metrics_rows=metrics_rows,
        fc_per_snapshot=fc_rows,
        fc_mean=fc_mean,
        fc_sd=fc_sd,
    )


def select_window(snapshots, best_index, n_window):
    """The n_window snapshots nearest the best one (ties toward earlier)."""
    ordered = sorted(snapshots, key=lambda s: (abs(s.index - best_index), s.index))
    window = sorted(ordered[: max(n_window, 1)], key=lambda s: s.index)
    return window


def cmd_train(config: ExperimentConfig, dataset_path: str, out_dir: str):
    header, data = read_dataset(dataset_path)
    povm = make_povm(config.povm)
    if header["povm"] != config.povm or header["m"] != povm.m:
        raise FormatError("dataset POVM does not match config")
    if header["n_qubits"] != _expected_n(config.state):
        raise FormatError("dataset qubit count does not match config state")

    want_fc = "fc_mc" in config.evaluation.metrics
    reference = build_reference(config.state, config.povm, config.seed) if want_fc else None
    result = train_model(
        config, data, reference, fc_samples=config.evaluation.n_samples if want_fc else 0
    )
    os.makedirs(out_dir, exist_ok=True)
    cfg_hash = config_hash(config.to_dict())
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    save_model(
        ckpt_path,
        result.model,
        meta={"best_snapshot": result.best_index, "seed": config.seed},
        cfg_hash=cfg_hash,
    )
    metrics_path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(metrics_path, result.metrics_rows)
    return ckpt_path, metrics_path


def _expected_n(state: StateSpec) -> int:
    return state.l * state.l if state.kind == "heisenberg_tri" else state.n


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def reference_table(ref: Reference, m: int):
    from .povm import ProbabilityTable, all_outcome_strings

    strings = all_outcome_strings(ref.n_qubits, m)
    probs = np.exp(ref.log_prob(strings))
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-8:
        raise AssertionError(f"reference table sums to {total}")
    return ProbabilityTable(N=ref.n_qubits, m=m, probs=probs / total)


def correlator_observables(kind: str, n_qubits: int):
    """Fig.-style correlator sets: per-site transverse magnetization and
    two-point correlators anchored at site 0."""
    from .dense import pauli_observable
    from .povm import PAULI_X, PAULI_Y, PAULI_Z

    obs = []
    if kind == "tfim":
        for i in range(n_qubits):
            obs.append((f"sx_{i}", i, pauli_observable("x", (i,))))
        for i in range(1, n_qubits):
            obs.append((f"zz_0_{i}", i, pauli_observable("zz", (0, i))))
    elif kind == "heisenberg":
        from .dense import LocalObservable

        dot = (
            np.kron(PAULI_X, PAULI_X) + np.kron(PAULI_Y, PAULI_Y) + np.kron(PAULI_Z, PAULI_Z)
        )
        for i in range(1, n_qubits):
            obs.append((f"ss_0_{i}", i, LocalObservable(support=(0, i), operator=dot)))
    return obs


def cmd_eval(config: ExperimentConfig, checkpoint_path: str, out_dir: str):
    from .datafiles import load_model
    from .estimation import estimate_observable, q_coefficients
    from .reconstruction import reconstruction_fidelity

    model, header = load_model(checkpoint_path)
    povm = make_povm(config.povm)
    if model.N != _expected_n(config.state) or model.m != povm.m:
        raise FormatError("checkpoint does not match config state/POVM")
    ref = build_reference(config.state, config.povm, config.seed)
    cfg_hash = config_hash(config.to_dict())
    ev = config.evaluation
    rows = []

    if isinstance(model, MultinomialRBM):
        eval_model = _TableBackedRBM(model)
    else:
        eval_model = model

    if "fc_mc" in ev.metrics:
        res = classical_fidelity(eval_model, ref.log_prob, ev.n_samples, derived_seed(config.seed, "eval_fc"))
        rows.append(("fc_mc", res.mean, res.stderr, res.n_samples, cfg_hash))
    if "fc_exact" in ev.metrics or "kl_exact" in ev.metrics or "fidelity_reconstruction" in ev.metrics:
        ptab = reference_table(ref, povm.m)
        mtab = model_table(eval_model)
        if "fc_exact" in ev.metrics:
            rows.append(("fc_exact", classical_fidelity_exact(mtab, ptab), None, ptab.probs.size, cfg_hash))
        if "kl_exact" in ev.metrics:
            rows.append(("kl_exact", kl_divergence_exact(ptab, mtab), None, ptab.probs.size, cfg_hash))
        if "fidelity_reconstruction" in ev.metrics:
            if ref.dense_rho is None:
                raise SizeGuardError("fidelity_reconstruction needs N <= 8")
            F = reconstruction_fidelity(mtab, ref.dense_rho(), povm)
            rows.append(("fidelity_reconstruction", F, None, mtab.probs.size, cfg_hash))
    if "nll" in ev.metrics:
        ref_samples, _ = ref.sampler(ev.n_samples, derived_seed(config.seed, "eval_nll"))
        lp = eval_model.log_prob(ref_samples)
        rows.append(("cross_entropy", float(-lp.mean()), float(lp.std(ddof=1) / np.sqrt(lp.size)), lp.size, cfg_hash))

    os.makedirs(out_dir, exist_ok=True)
    corr_path = None
    if ev.correlators != "none":
        obs_list = correlator_observables(ev.correlators, ref.n_qubits)
        samples, _ = eval_model.sample_with_logprob(ev.n_samples, derived_seed(config.seed, "eval_obs"))
        corr_rows = []
        for name, site, obs in obs_list:
            q = q_coefficients(obs, povm)
            res = estimate_observable(samples, q, povm.m)
            exact = ref_expectation(ref, obs)
            corr_rows.append((name, site, exact, res.mean, res.stderr, res.n_samples, cfg_hash))
        corr_path = os.path.join(out_dir, "correlators.csv")
        with open(corr_path, "w", encoding="utf-8") as f:
            f.write("observable,site,exact,estimate,stderr,n_samples,config_hash\n")
            for name, site, exact, est, se, n, ch in corr_rows:
                f.write(f"{name},{site},{_csv_float(exact)},{_csv_float(est)},{_csv_float(se)},{n},{ch}\n")

    metrics_path = os.path.join(out_dir, "eval_metrics.csv")
    write_metrics_csv(metrics_path, rows)
    return metrics_path, corr_path


def _csv_float(x):
    return "" if x is None else repr(float(x))


def ref_expectation(ref: Reference, obs) -> float:
    """Exact expectation in the reference state (dense oracle)."""
    from .dense import expectation

    if ref.spec.kind == "ghz":
        if ref.dense_rho is None:
            raise SizeGuardError("exact correlators for GHZ need N <= 8")
        return expectation(ref.dense_rho(), obs)
    spec = (
        HamiltonianSpec.tfim(ref.spec.n, J=ref.spec.j, h=ref.spec.h, boundary=ref.spec.boundary)
        if ref.spec.kind == "tfim"
        else HamiltonianSpec.heisenberg_triangular(ref.spec.l, boundary=ref.spec.boundary)
    )
    ket, _ = ground_state(spec, seed=0)
    return expectation(ket, obs)


class _TableBackedRBM:
    """RBM with exact densities via its enumerated table (small N)."""

    def __init__(self, rbm: MultinomialRBM):
        from .estimation import TableModel

        self._inner = TableModel(rbm.exact_table())
        self.N = rbm.N
        self.m = rbm.m

    def log_prob(self, outcomes):
        return self._inner.log_prob(outcomes)

    def sample_with_logprob(self, n, seed):
        return self._inner.sample_with_logprob(n, seed)


# ---------------------------------------------------------------------------
# sample-complexity sweep
# ---------------------------------------------------------------------------


def _sweep_epochs(sweep, training, ns: int) -> int:
    """Scale epoch count so every cell sees a comparable number of updates."""
    steps_per_epoch = max(ns // training.batch_size, 1)
    want = max(int(math.ceil(sweep.target_steps / steps_per_epoch)), 2)
    return min(want, sweep.max_epochs)


def _sweep_cell(args):
    config_dict, N, ns, cell_seed = args
    config = ExperimentConfig.from_dict(config_dict)
    from dataclasses import replace

    state = replace(config.state, n=N)
    sweep = config.sweep
    epochs = _sweep_epochs(sweep, config.training, ns)
    cell_cfg = ExperimentConfig(
        state=state,
        povm=config.povm,
        model=config.model,
        training=_retuned_training(config.training, epochs),
        evaluation=config.evaluation,
        n_samples=ns,
        seed=cell_seed,
    )
    ref = build_reference(state, config.povm, cell_cfg.seed)
    data, _ = ref.sampler(ns, derived_seed(cell_cfg.seed, "sweep-data"))
    result = train_model(cell_cfg, data, ref, fc_samples=sweep.eval_samples)
    return {"N": N, "ns": ns, "fc_mean": result.fc_mean, "fc_sd": result.fc_sd}


def _retuned_training(tcfg, epochs: int):
    from dataclasses import replace

    ckpt_every = min(tcfg.checkpoint_every, float(epochs))
    return replace(tcfg, epochs=epochs, checkpoint_every=ckpt_every)


def cmd_sweep(config: ExperimentConfig, out_dir: str, threads: int = 1):
    """Train across the (N, N_s) grid; report interpolated N_s*(N) and a fit.

    Grid cells for one N are visited in ascending N_s and stop early once
    the windowed classical fidelity crosses the target; different N values
    run in parallel when threads > 1.
    """
    sweep = config.sweep
    if sweep is None or not sweep.n_list:
        raise FormatError("config.sweep.n_list must be set for sweep")
    if config.state.kind != "ghz":
        raise FormatError("sample-complexity sweeps are defined for the ghz family")

    jobs = [(config.to_dict(), N) for N in sweep.n_list]
    if threads > 1:
        import multiprocessing as mp

        old = os.environ.get("OPENBLAS_NUM_THREADS")
        os.environ["OPENBLAS_NUM_THREADS"] = "1"
        try:
            ctx = mp.get_context("spawn")
            with ctx.Pool(threads) as pool:
                results = pool.map(_sweep_run_n_worker, jobs)
        finally:
            if old is None:
                os.environ.pop("OPENBLAS_NUM_THREADS", None)
            else:
                os.environ["OPENBLAS_NUM_THREADS"] = old
    else:
        results = [_sweep_run_n_worker(job) for job in jobs]

    results.sort(key=lambda r: sweep.n_list.index(r["N"]))
    fit = fit_ns_star([r["N"] for r in results if not r["censored"]],
                      [r["ns_star"] for r in results if not r["censored"]])

    os.makedirs(out_dir, exist_ok=True)
    cfg_hash = config_hash(config.to_dict())
    cells_path = os.path.join(out_dir, "sweep_cells.csv")
    with open(cells_path, "w", encoding="utf-8") as f:
        f.write("povm,p,N,n_s,fc_mean,fc_sd,config_hash\n")
        for r in results:
            for c in r["cells"]:
                f.write(
                    f"{config.povm},{_csv_float(config.state.p)},{r['N']},{c['ns']},"
                    f"{_csv_float(c['fc_mean'])},{_csv_float(c['fc_sd'])},{cfg_hash}\n"
                )
    summary_path = os.path.join(out_dir, "sweep_summary.csv")
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write("povm,p,N,ns_star,censored,fit_slope,fit_intercept,fit_r,config_hash\n")
        for r in results:
            ns_star = "" if r["censored"] else repr(float(r["ns_star"]))
            f.write(
                f"{config.povm},{_csv_float(config.state.p)},{r['N']},{ns_star},"
                f"{int(r['censored'])},{_csv_float(fit[0])},{_csv_float(fit[1])},"
                f"{_csv_float(fit[2])},{cfg_hash}\n"
            )
    return cells_path, summary_path, results, fit


def _sweep_run_n_worker(args):
    config_dict, N = args
    config = ExperimentConfig.from_dict(config_dict)
    sweep = config.sweep
    cells = []
    ns_star = None
    censored = True
    prev = None
    for ns in sweep.ns_grid:
        cell_seed = derived_seed(config.seed, f"cell-{N}-{ns}")
        cell = _sweep_cell((config.to_dict(), N, ns, cell_seed))
        cells.append(cell)
        if cell["fc_mean"] >= sweep.target_fc:
            censored = False
            if prev is None:
                ns_star = float(ns)
            else:
                ns0, fc0 = prev
                frac = (sweep.target_fc - fc0) / (cell["fc_mean"] - fc0)
                ns_star = ns0 + frac * (ns - ns0)
            break
        prev = (ns, cell["fc_mean"])
    return {"N": N, "cells": cells, "ns_star": ns_star, "censored": censored}


def fit_ns_star(ns, stars):
    """(slope, intercept, r) of the least-squares line N_s*(N)."""
    if len(ns) < 2:
        return (math.nan, math.nan, math.nan)
    x = np.asarray(ns, dtype=float)
    y = np.asarray(stars, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    r = float(np.corrcoef(x, y)[0, 1])
    return (float(slope), float(intercept), r)


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


def cmd_reconstruct(config: ExperimentConfig, source_path: str, out_dir: str):
    """Reconstruct a dense density matrix from a checkpoint or a dataset."""
    from .datafiles import load_model
    from .povm import ProbabilityTable
    from .reconstruction import RECONSTRUCT_MAX_N, reconstruct_density_matrix

    povm = make_povm(config.povm)
    N = _expected_n(config.state)
    if N > RECONSTRUCT_MAX_N:
        raise SizeGuardError(f"dense reconstruction capped at N = {RECONSTRUCT_MAX_N}")

    if source_path.endswith(".ckpt"):
        model, _ = load_model(source_path)
        if isinstance(model, MultinomialRBM):
            source = model.exact_table()
        else:
            source = model_table(model)
    else:
        header, data = read_dataset(source_path)
        if header["povm"] != config.povm:
            raise FormatError("dataset POVM does not match config")
        idx = np.zeros(data.shape[0], dtype=np.int64)
        for k in range(header["n_qubits"]):
            idx = idx * povm.m + data[:, k]
        counts = np.bincount(idx, minlength=povm.m ** header["n_qubits"])
        source = ProbabilityTable(
            N=header["n_qubits"], m=povm.m, probs=counts / counts.sum()
        )

    rho, diag = reconstruct_density_matrix(source, povm)
    os.makedirs(out_dir, exist_ok=True)
    blob_path = os.path.join(out_dir, "rho.bin")
    rho.astype("<c16").tofile(blob_path)
    sidecar = {
        "format": "povmtomo-density-matrix",
        "version": 1,
        "dtype": "<c16",
        "shape": list(rho.shape),
        "povm": config.povm,
        "n_qubits": N,
        "config_hash": config_hash(config.to_dict()),
        "diagnostics": {
            "trace_deviation": diag.trace_deviation,
            "hermiticity_deviation": diag.hermiticity_deviation,
            "min_eigenvalue": diag.min_eigenvalue,
            "negativity": diag.negativity,
        },
    }
    import json

    with open(os.path.join(out_dir, "rho.json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return blob_path, diag
