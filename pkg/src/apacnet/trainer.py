"""Alternating training of the value field and the generator.

Each outer iteration runs one value-field update followed by one generator
update.  The value field ascends the saddle objective (initial-time term
plus integrand term) while descending the equation-residual penalty; the
generator descends the integrand term including the interaction cost.  Runs
are bit-reproducible given the configuration seed.
"""

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from apacnet import networks, ops
from apacnet.environments import (InteractionContext, make_environment, sample_batch,
                                  sample_rho0)
from apacnet.ops import value_of
from apacnet.tape import Tape
from apacnet.validation import (AnalyticSolution, KdeEstimator, build_validation_points,
                                relative_error)

MONITOR_POINTS = 4096
MONITOR_KDE_FIT = 512  # density-fit subsample for the fixed residual monitor

HISTORY_COLUMNS = ("iter", "l0", "lt", "lhjb", "monitor_residual",
                   "rel_error_phi", "rel_error_rho")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 1e-4
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0


def init_adam(params, lr, beta1=0.5, beta2=0.9, weight_decay=1e-4):
    return AdamState(lr, beta1, beta2, weight_decay,
                     m=np.zeros(params.n_params()), v=np.zeros(params.n_params()))


def adam_step(adam, params, grads):
    """One update with coupled L2 decay; mutates ``params`` in place."""
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {params.shape}")
    adam.step_count += 1
    bc1 = 1.0 - adam.beta1 ** adam.step_count
    bc2 = 1.0 - adam.beta2 ** adam.step_count
    g = grads + adam.weight_decay * params
    m, v = adam.m, adam.v
    m *= adam.beta1
    m += (1.0 - adam.beta1) * g
    v *= adam.beta2
    v += (1.0 - adam.beta2) * (g * g)
    params -= adam.lr * (m / bc1) / (np.sqrt(v / bc2) + adam.eps)
    return params


def _collect_grads(tape, layers, params):
    """Concatenate per-leaf gradients in flat-buffer order."""
    flat = np.empty(params.n_params())
    off = 0
    for Wn, bn in layers:
        for node in (Wn, bn):
            size = node.value.size
            g = node.grad
            if g is None:
                flat[off:off + size] = 0.0
            else:
                flat[off:off + size] = g.ravel()
            off += size
    return flat


# ---------------------------------------------------------------------------
# loss assembly

def hjb_terms(env, bundle, x, t):
    """Integrand dt(phi) + nu*lap(phi) - H(x, grad(phi), t), one value per sample."""
    h = env.hamiltonian(x, bundle.grad, t)
    return ops.sub(ops.add(bundle.dt, ops.mul(env.nu, bundle.lap)), h)


def hjb_residual(env, bundle, x, t, f_vals):
    """Equation residual dt + nu*lap - H + f per sample; zero at the exact solution."""
    return ops.add(hjb_terms(env, bundle, x, t), f_vals)


def assemble_phi_objective(phi0, s_terms, f_vals, lam):
    """Returns (objective node, l0, lt, lhjb); the objective is minimized."""
    l0 = ops.mean_all(phi0)
    lt = ops.mean_all(s_terms)
    lhjb = ops.mul(lam, ops.mean_all(ops.absval(ops.add(s_terms, f_vals))))
    obj = ops.add(ops.neg(ops.add(l0, lt)), lhjb)
    return obj, float(value_of(l0)), float(value_of(lt)), float(value_of(lhjb))


def _interaction_ctx(env, gen_params, pushed, aux_z, t):
    aux_x = None
    kde = None
    if env.interaction.needs_aux:
        aux_x = value_of(networks.generator_forward(gen_params, aux_z, t, env.horizon))
    if env.interaction.needs_kde:
        fit = np.asarray(pushed[:MONITOR_KDE_FIT] if pushed.shape[0] > MONITOR_KDE_FIT else pushed)
        kde = KdeEstimator(fit, sigma=env.kde_sigma)
    return InteractionContext(aux_points=aux_x, kde=kde)


class TrainerState:
    def __init__(self, cfg, env):
        self.cfg = cfg
        self.env = env
        ss = np.random.SeedSequence(cfg.seed)
        s_value, s_gen, s_monitor, s_train, s_valid = ss.spawn(5)
        v_cfg = networks.value_net_config(cfg.dim, cfg.width, cfg.hidden_layers)
        g_cfg = networks.generator_net_config(cfg.dim, cfg.width, cfg.hidden_layers)
        self.value_params = networks.init_params(v_cfg, s_value, networks.ROLE_VALUE)
        self.gen_params = networks.init_params(g_cfg, s_gen, networks.ROLE_GENERATOR)
        self.value_params.seed = cfg.seed
        self.gen_params.seed = cfg.seed
        self.adam_value = init_adam(self.value_params, cfg.lr_phi, cfg.beta1, cfg.beta2,
                                    cfg.weight_decay)
        self.adam_gen = init_adam(self.gen_params, cfg.lr_gen, cfg.beta1, cfg.beta2,
                                  cfg.weight_decay)
        self.iteration = 0
        rng_mon = np.random.default_rng(s_monitor)
        mon = sample_batch(env, MONITOR_POINTS, rng_mon)
        self.monitor_z, self.monitor_t = mon.z, mon.t
        self.monitor_aux = sample_rho0(env, MONITOR_POINTS, rng_mon)
        self.rng = np.random.default_rng(s_train)
        self.rng_valid_seed = s_valid
        self._init_validation()

    def _init_validation(self):
        self.validation = None
        if self.env.name != "analytic":
            return
        cfg = self.cfg
        sol = AnalyticSolution(cfg.gamma, cfg.nu, cfg.beta, cfg.dim)
        mode = "grid2d" if cfg.dim == 2 else "samples"
        rng = np.random.default_rng(self.rng_valid_seed)
        pts, tt = build_validation_points(sol, mode, seed=rng.integers(2 ** 31))
        fit = sample_batch(self.env, 1024, rng)
        self.validation = {"sol": sol, "mode": mode, "points": pts, "times": tt,
                           "fit_z": fit.z, "fit_t": fit.t}


def phi_step(state, env, rng):
    """One value-field update; the generator is frozen. Returns (l0, lt, lhjb)."""
    cfg = state.cfg
    batch = sample_batch(env, cfg.batch_size, rng)
    aux_z = sample_rho0(env, cfg.batch_size, rng) if env.interaction.needs_aux else None
    x = value_of(networks.generator_forward(state.gen_params, batch.z, batch.t, env.horizon))
    ctx = _interaction_ctx(env, state.gen_params, x, aux_z, batch.t)

    tape = Tape()
    layers = networks.register_params(tape, state.value_params, trainable=True)
    v_cfg = state.value_params.cfg
    bundle = networks.value_eval(layers, v_cfg, env.terminal, x, batch.t, env.horizon)
    phi0 = networks.value_eval_plain(layers, v_cfg, env.terminal, x,
                                     np.zeros_like(batch.t), env.horizon)
    s = hjb_terms(env, bundle, x, batch.t)
    f = value_of(env.interaction.per_sample(x, ctx))
    obj, l0, lt, lhjb = assemble_phi_objective(phi0, s, f, cfg.lambda_hjb)
    if not np.isfinite(float(value_of(obj))):
        raise TrainingDiverged(
            f"value-field loss is not finite at iteration {state.iteration}: "
            f"l0={l0}, lt={lt}, lhjb={lhjb}")
    tape.backward(obj)
    grads = _collect_grads(tape, layers, state.value_params)
    adam_step(state.adam_value, state.value_params.buffer, grads)
    return l0, lt, lhjb


def generator_step(state, env, rng):
    """One generator update; the value field is frozen. Returns the loss."""
    cfg = state.cfg
    batch = sample_batch(env, cfg.batch_size, rng)
    aux_z = sample_rho0(env, cfg.batch_size, rng) if env.interaction.needs_aux else None

    tape = Tape()
    g_layers = networks.register_params(tape, state.gen_params, trainable=True)
    v_layers = networks.register_params(tape, state.value_params, trainable=False)
    x = networks.generator_eval(g_layers, state.gen_params.cfg, batch.z, batch.t, env.horizon)
    ctx = _interaction_ctx(env, state.gen_params, value_of(x), aux_z, batch.t)
    bundle = networks.value_eval(v_layers, state.value_params.cfg, env.terminal,
                                 x, batch.t, env.horizon)
    s = hjb_terms(env, bundle, x, batch.t)
    f = env.interaction.per_sample(x, ctx)
    loss = ops.mean_all(ops.add(s, f))
    loss_val = float(value_of(loss))
    if not np.isfinite(loss_val):
        raise TrainingDiverged(
            f"generator loss is not finite at iteration {state.iteration}: lt={loss_val}")
    tape.backward(loss)
    grads = _collect_grads(tape, g_layers, state.gen_params)
    adam_step(state.adam_gen, state.gen_params.buffer, grads)
    return loss_val


def monitor_residual(state, env):
    """Mean |residual| over the fixed monitor batch, pushed through the current generator."""
    x = value_of(networks.generator_forward(state.gen_params, state.monitor_z,
                                            state.monitor_t, env.horizon))
    ctx = _interaction_ctx(env, state.gen_params, x, state.monitor_aux, state.monitor_t)
    bundle = networks.value_eval(state.value_params.layers, state.value_params.cfg,
                                 env.terminal, x, state.monitor_t, env.horizon)
    s = hjb_terms(env, bundle, x, state.monitor_t)
    f = value_of(env.interaction.per_sample(x, ctx))
    return float(np.mean(np.abs(value_of(s) + f)))


def validation_errors(state, env):
    """(phi relative error, density relative error) on the fixed validation set."""
    val = state.validation
    if val is None:
        return None, None
    sol, pts, tt = val["sol"], val["points"], val["times"]
    pred = value_of(networks.value_eval_plain(state.value_params.layers,
                                              state.value_params.cfg, env.terminal,
                                              pts, tt, env.horizon))
    rel_phi = relative_error(pred, sol.phi(pts, tt))

    pushed = value_of(networks.generator_forward(state.gen_params, val["fit_z"],
                                                 val["fit_t"], env.horizon))
    # density-quality column uses Scott's rule at the data scale; the
    # sqrt(gamma/nu) scale is reserved for the training-time interaction
    sigma = float(np.sqrt(pushed.var(axis=0).mean()))
    kde = KdeEstimator(pushed, sigma=max(sigma, 1e-6))
    rel_rho = relative_error(kde.density(pts), sol.rho(pts))
    return rel_phi, rel_rho


def format_real(x):
    return format(float(x), ".17g")


def write_history(path, rows):
    """RFC-4180 CSV (CRLF, header, 17-significant-digit reals)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in rows:
        writer.writerow([
            row["iter"],
            *(format_real(row[k]) if row.get(k) is not None else ""
              for k in HISTORY_COLUMNS[1:]),
        ])
    data = buf.getvalue()
    with open(path, "w", newline="") as fh:
        fh.write(data)
    return data


def read_history(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {"iter": int(raw["iter"])}
            for key in HISTORY_COLUMNS[1:]:
                row[key] = float(raw[key]) if raw.get(key) else None
            rows.append(row)
    return rows


def save_checkpoint(state, out_dir):
    networks.save_params(os.path.join(out_dir, "params_value.apc"),
                         state.value_params, state.iteration)
    networks.save_params(os.path.join(out_dir, "params_generator.apc"),
                         state.gen_params, state.iteration)
    arrays = {}
    for tag, params in (("value", state.value_params), ("gen", state.gen_params)):
        arrays[f"{tag}_buffer"] = params.buffer
    for tag, adam in (("value", state.adam_value), ("gen", state.adam_gen)):
        arrays[f"adam_{tag}_m"] = adam.m
        arrays[f"adam_{tag}_v"] = adam.v
        arrays[f"adam_{tag}_k"] = np.array(adam.step_count)
    arrays["iteration"] = np.array(state.iteration)
    arrays["monitor_z"] = state.monitor_z
    arrays["monitor_t"] = state.monitor_t
    arrays["monitor_aux"] = state.monitor_aux
    arrays["rng_state"] = np.array(json.dumps(state.rng.bit_generator.state))
    np.savez(os.path.join(out_dir, "state.npz"), **arrays)


def load_checkpoint(state, out_dir):
    """Restore parameters, moments, counters, and the training stream in place."""
    data = np.load(os.path.join(out_dir, "state.npz"))
    for tag, params in (("value", state.value_params), ("gen", state.gen_params)):
        params.buffer[:] = data[f"{tag}_buffer"]
    for tag, adam in (("value", state.adam_value), ("gen", state.adam_gen)):
        adam.m[:] = data[f"adam_{tag}_m"]
        adam.v[:] = data[f"adam_{tag}_v"]
        adam.step_count = int(data[f"adam_{tag}_k"])
    state.iteration = int(data["iteration"])
    state.monitor_z = data["monitor_z"]
    state.monitor_t = data["monitor_t"]
    state.monitor_aux = data["monitor_aux"]
    state.rng.bit_generator.state = json.loads(str(data["rng_state"]))
    return state


def train(cfg, out_dir=None, resume=False, verbose=False):
    """Run the full alternating loop; returns (state, history rows)."""
    env = make_environment(cfg)
    state = TrainerState(cfg, env)
    history = []
    if resume:
        if out_dir is None:
            raise ValueError("resume requires an output directory")
        load_checkpoint(state, out_dir)
        prior = os.path.join(out_dir, "history.csv")
        if os.path.exists(prior):
            history = read_history(prior)

    def log_row(l0=None, lt=None, lhjb=None, validate=False):
        rel_phi = rel_rho = None
        if validate and state.validation is not None:
            rel_phi, rel_rho = validation_errors(state, env)
        history.append({"iter": state.iteration, "l0": l0, "lt": lt, "lhjb": lhjb,
                        "monitor_residual": monitor_residual(state, env),
                        "rel_error_phi": rel_phi, "rel_error_rho": rel_rho})
        if verbose:
            row = history[-1]
            parts = [f"iter {row['iter']:>7d}", f"monitor {row['monitor_residual']:.6f}"]
            if l0 is not None:
                parts.append(f"l0 {l0:+.5f} lt {lt:+.5f} lhjb {lhjb:.5f}")
            if rel_phi is not None:
                parts.append(f"rel_phi {rel_phi:.5f} rel_rho {rel_rho:.5f}")
            print("  ".join(parts), flush=True)

    if state.iteration == 0 and not history:
        log_row(validate=True)

    while state.iteration < cfg.iterations:
        state.iteration += 1
        l0, lt, lhjb = phi_step(state, env, state.rng)
        generator_step(state, env, state.rng)
        at_end = state.iteration == cfg.iterations
        if state.iteration % cfg.log_interval == 0 or at_end:
            validate = state.iteration % cfg.validate_interval == 0 or at_end
            log_row(l0, lt, lhjb, validate=validate)
            if out_dir is not None and validate:
                save_checkpoint(state, out_dir)

    if out_dir is not None:
        save_checkpoint(state, out_dir)
        write_history(os.path.join(out_dir, "history.csv"), history)
    return state, history
