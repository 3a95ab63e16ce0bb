"""Physics-informed attack identification.

An alarmed window is projected back onto the detector's normality
manifold *through the measurement equation*: the free variable is the
rectangular state at the last timestep, the candidate measurement is
h(state) built on the autodiff tape (no trigonometry needed in
rectangular coordinates), and Adam descends the energy

    E = reconstruction-loss(prefix ++ h(v)) + β_R·||v_R − v_R^a||₁
                                            + β_I·||v_I − v_I^a||₁

until the loss clears the detector threshold.  The identified attack is
the gap between the attacked estimate and the recovered state; the
recovered measurement is noiseless by construction, so it always passes
the residual test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Node, Tape, adam_step
from .detector import LstmAeModel, loss_tape
from .estimation import bdd_alarm, wls_estimate
from .grid.measurement import evaluate_h
from .grid.model import GridModel, StateVector


class IdentificationError(RuntimeError):
    """Divergent identification; carries the iteration trace."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class UncertaintySet:
    """Ball of candidate attacks around the identified center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def contains(self, c: np.ndarray) -> bool:
        return bool(np.linalg.norm(np.asarray(c) - self.center) <= self.radius)

    @property
    def contains_zero(self) -> bool:
        """True when the null attack is a member (stage one may go trivial)."""
        return bool(np.linalg.norm(self.center) <= self.radius)


def uncertainty_set(c_bar: np.ndarray, rho: float) -> UncertaintySet:
    return UncertaintySet(center=np.asarray(c_bar, dtype=float).copy(), radius=rho)


@dataclass
class IdentifyConfig:
    lr: float = 0.005
    beta_r: float = 0.1
    beta_i: float = 0.1
    ite_min: int = 50
    ite_max: int = 1000
    tau_bdd: float | None = None      # residual threshold for the bypass check
    divergence_patience: int = 50
    rho: float = 0.01                 # uncertainty radius handed to the MTD


@dataclass
class IdentificationResult:
    recovered_state: StateVector
    z_recovered: np.ndarray          # h(recovered state), noiseless
    c_r: np.ndarray                  # v_R^a − v_R^nor at non-reference buses
    c_i: np.ndarray
    c_angle: np.ndarray              # angle-space view used by the MTD center
    final_loss: float
    iterations: int
    bypass_bdd: bool
    bypass_ae: bool
    trace: list = field(default_factory=list)   # (iteration, energy, loss)

    def to_report(self, timestep: int) -> dict:
        return {
            "timestep": timestep,
            "iterations": self.iterations,
            "final_loss": self.final_loss,
            "c_bar": {"real": self.c_r.tolist(), "imag": self.c_i.tolist()},
            "bypass_bdd": self.bypass_bdd,
            "bypass_ae": self.bypass_ae,
        }


# ----------------------------------------------------------------------
# rectangular measurement graph
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _RectConstants:
    """Transposed real/imaginary matrices for row-vector tape algebra."""

    gt: np.ndarray
    bt: np.ndarray
    cft: np.ndarray
    ctt: np.ndarray
    gft: np.ndarray
    bft: np.ndarray
    gtt_: np.ndarray
    btt_: np.ndarray
    place: np.ndarray    # (N, N+1) non-reference placement
    vref_r: np.ndarray   # (1, N+1) reference contribution, real part
    n: int


def rect_constants(grid: GridModel) -> _RectConstants:
    adm = grid.admittance()
    place = np.zeros((grid.n, grid.n_bus))
    for j, bus in enumerate(grid.nonref):
        place[j, bus] = 1.0
    vref_r = np.zeros((1, grid.n_bus))
    vref_r[0, grid.ref] = grid.vm_setpoints()[grid.ref]   # reference angle is 0
    return _RectConstants(
        gt=adm.ybus.real.T.copy(), bt=adm.ybus.imag.T.copy(),
        cft=adm.cf.T.copy(), ctt=adm.ct.T.copy(),
        gft=adm.yf.real.T.copy(), bft=adm.yf.imag.T.copy(),
        gtt_=adm.yt.real.T.copy(), btt_=adm.yt.imag.T.copy(),
        place=place, vref_r=vref_r, n=grid.n)


def measurement_graph(tape: Tape, const: _RectConstants, x: Node) -> Node:
    """h(v) on the tape from x = [v_R, v_I] at non-reference buses, (1, 2N).

    Returns the (1, P) measurement row in package ordering.  Rectangular
    coordinates keep the whole computation inside {matmul, mul, add}.
    """
    n = const.n
    place_t = tape.leaf(const.place)
    v_r = tape.add(tape.matmul(tape.slice_axis(x, 1, 0, n), place_t),
                   tape.leaf(const.vref_r))
    v_i = tape.matmul(tape.slice_axis(x, 1, n, 2 * n), place_t)

    def complex_apply(gt, bt):
        # I = Y v in row form: (re, im) given transposed G/B matrices
        g_n, b_n = tape.leaf(gt), tape.leaf(bt)
        re = tape.sub(tape.matmul(v_r, g_n), tape.matmul(v_i, b_n))
        im = tape.add(tape.matmul(v_i, g_n), tape.matmul(v_r, b_n))
        return re, im

    def power_pair(sel_r, sel_i, i_r, i_i):
        # S = v ∘ conj(I): P = vR∘IR + vI∘II, Q = vI∘IR − vR∘II
        p = tape.add(tape.mul(sel_r, i_r), tape.mul(sel_i, i_i))
        q = tape.sub(tape.mul(sel_i, i_r), tape.mul(sel_r, i_i))
        return p, q

    ib_r, ib_i = complex_apply(const.gt, const.bt)
    p_bus, q_bus = power_pair(v_r, v_i, ib_r, ib_i)

    cft, ctt = tape.leaf(const.cft), tape.leaf(const.ctt)
    vf_r, vf_i = tape.matmul(v_r, cft), tape.matmul(v_i, cft)
    if_r, if_i = complex_apply(const.gft, const.bft)
    p_f, q_f = power_pair(vf_r, vf_i, if_r, if_i)

    vt_r, vt_i = tape.matmul(v_r, ctt), tape.matmul(v_i, ctt)
    it_r, it_i = complex_apply(const.gtt_, const.btt_)
    p_t, q_t = power_pair(vt_r, vt_i, it_r, it_i)

    return tape.concat([p_bus, p_f, p_t, q_bus, q_f, q_t], axis=1)


def _rect_nonref(grid: GridModel, state: StateVector) -> np.ndarray:
    v = state.v[grid.nonref]
    return np.concatenate([v.real, v.imag])[None, :]


def _state_from_x(grid: GridModel, x: np.ndarray) -> StateVector:
    n = grid.n
    v = np.zeros(grid.n_bus, dtype=complex)
    v[grid.ref] = grid.vm_setpoints()[grid.ref]
    v[grid.nonref] = x[0, :n] + 1j * x[0, n:]
    return StateVector(v)


def _energy_graph(tape: Tape, model: LstmAeModel, const: _RectConstants,
                  prefix_norm: np.ndarray, x: Node,
                  x_attacked: np.ndarray, beta_r: float, beta_i: float):
    """(energy node, loss node) for the current iterate."""
    z_row = measurement_graph(tape, const, x)
    inv_scale = tape.leaf((1.0 / model.scale)[None, :])
    mean_row = tape.leaf(model.mean[None, :])
    zn = tape.mul(tape.sub(z_row, mean_row), inv_scale)
    window = tape.concat([tape.leaf(prefix_norm), zn], axis=0)
    xs = [tape.slice_axis(window, 0, t, t + 1) for t in range(model.window_len)]
    pnodes = [tape.leaf(p) for p in model.params]
    loss = loss_tape(tape, pnodes, model.enc_widths, xs)

    n = const.n
    dev = tape.sub(x, tape.leaf(x_attacked))
    pen_r = tape.scale(tape.l1norm(tape.slice_axis(dev, 1, 0, n)), beta_r)
    pen_i = tape.scale(tape.l1norm(tape.slice_axis(dev, 1, n, 2 * n)), beta_i)
    energy_node = tape.add(loss, tape.add(pen_r, pen_i))
    return energy_node, loss


def energy(model: LstmAeModel, grid: GridModel, prefix: np.ndarray,
           v_r: np.ndarray, v_i: np.ndarray,
           v_r_a: np.ndarray, v_i_a: np.ndarray,
           beta_r: float = 0.1, beta_i: float = 0.1) -> float:
    """Energy value at a candidate non-reference rectangular state.

    ``prefix`` is the first T−1 raw measurement rows; the candidate and
    attacked components are length-N arrays.
    """
    const = rect_constants(grid)
    tape = Tape()
    x = tape.leaf(np.concatenate([v_r, v_i])[None, :])
    xa = np.concatenate([v_r_a, v_i_a])[None, :]
    prefix_norm = model.normalize(np.asarray(prefix, dtype=float))
    node, _ = _energy_graph(tape, model, const, prefix_norm, x, xa,
                            beta_r, beta_i)
    return float(node.value)


# ----------------------------------------------------------------------
# the identification loop
# ----------------------------------------------------------------------

def identify(model: LstmAeModel, window: np.ndarray, grid: GridModel,
             sigma: np.ndarray, config: IdentifyConfig) -> IdentificationResult:
    """Recover the normal measurement behind an alarmed window.

    ``window`` is the raw (T, P) measurement block that triggered the
    detector; only its last row is treated as attacked.  Warm start is
    the state estimate of the previous row, falling back to the attacked
    estimate when that solve fails.
    """
    if model.tau is None:
        raise ValueError("detector threshold not calibrated")
    window = np.asarray(window, dtype=float)
    if window.shape != (model.window_len, model.d_in):
        raise ValueError(
            f"expected window shape {(model.window_len, model.d_in)}, "
            f"got {window.shape}")

    attacked_se = wls_estimate(grid, window[-1], sigma)
    v_hat_a = attacked_se.state
    try:
        warm_se = wls_estimate(grid, window[-2], sigma)
        warm = warm_se.state if warm_se.converged else v_hat_a
    except Exception:
        warm = v_hat_a

    const = rect_constants(grid)
    prefix_norm = model.normalize(window[:-1])
    x_val = _rect_nonref(grid, warm)
    x_attacked = _rect_nonref(grid, v_hat_a)

    adam = AdamState.for_params([x_val], lr=config.lr)
    trace: list[tuple[int, float, float]] = []
    prev_energy = np.inf
    rising = 0
    loss_val = np.inf
    iterations = 0
    for k in range(1, config.ite_max + 1):
        iterations = k
        tape = Tape()
        x = tape.leaf(x_val)
        energy_node, loss_node = _energy_graph(
            tape, model, const, prefix_norm, x, x_attacked,
            config.beta_r, config.beta_i)
        energy_val = float(energy_node.value)
        loss_val = float(loss_node.value)
        trace.append((k, energy_val, loss_val))
        if k >= config.ite_min and loss_val < model.tau:
            break
        if energy_val > prev_energy:
            rising += 1
            if rising >= config.divergence_patience:
                raise IdentificationError(
                    f"identification diverged: energy rose for {rising} "
                    f"consecutive iterations (at iteration {k})", trace)
        else:
            rising = 0
        prev_energy = energy_val
        (g,) = tape.grad(energy_node, [x])
        (x_val,) = adam_step(adam, [x_val], [g])

    recovered = _state_from_x(grid, x_val)
    z_rec = evaluate_h(grid, recovered)

    v_rec = recovered.v[grid.nonref]
    v_att = v_hat_a.v[grid.nonref]
    c_r = (v_att - v_rec).real
    c_i = (v_att - v_rec).imag
    c_angle = v_hat_a.va[grid.nonref] - recovered.va[grid.nonref]

    rec_se = wls_estimate(grid, z_rec, sigma)
    tau_bdd = config.tau_bdd
    bypass_bdd = True if tau_bdd is None else not bdd_alarm(rec_se.gamma, tau_bdd)
    rec_window = np.vstack([window[:-1], z_rec[None, :]])
    ae_alarm, _ = model.detect(rec_window)

    return IdentificationResult(
        recovered_state=recovered, z_recovered=z_rec,
        c_r=c_r, c_i=c_i, c_angle=c_angle,
        final_loss=loss_val, iterations=iterations,
        bypass_bdd=bypass_bdd, bypass_ae=not ae_alarm, trace=trace)
