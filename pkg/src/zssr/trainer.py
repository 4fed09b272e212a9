"""Test-time training of an image-specific network and the SR prediction.

The training set is made entirely from the input image: downscaled copies of
it act as HR targets ("fathers"), and each father downscaled once more by the
SR factor gives the matching LR input ("son").
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .image import ALL_GEOMETRIES, Geometry, apply_geometry
from .network import (AdamState, DivergenceError, ForwardCache, NetworkConfig, adam_step, backward,
                      forward, init_network, l1_loss)
from .resample import Kernel, downscale, resize_by, scaled_size

log = logging.getLogger(__name__)

ORIGINAL = "original"
DOWNSCALED = "downscaled"
SYNTHESIZED = "synthesized-HR"


@dataclass(frozen=True)
class ZssrConfig:
    """Every knob of a run. ``kernel=None`` means antialiased bicubic."""

    scale_factor: float = 2.0
    gradual_steps: int = 6
    kernel: Kernel | None = None
    use_backprojection: bool = True
    inject_noise: bool = False
    noise_sigma: float = 5.0 / 255.0
    crop_size: int = 128
    lr_init: float = 1e-3
    lr_floor: float = 1e-6
    lr_drop_factor: float = 10.0
    max_iterations: int = 3000
    seed: int = 0

    # schedule
    check_period: int = 60
    window: int = 256
    fit_factor: float = 1.5

    # father pool
    pool_ratio: float = 0.95
    pool_cap: int = 32
    min_son_size: int = 16

    backprojection_iters: int = 8
    backprojection_tol: float = 1e-4

    hidden_layers: int = 8
    channels: int = 64
    kernel_size: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        if not self.scale_factor > 1:
            raise ValueError(f"scale_factor must exceed 1, got {self.scale_factor}")
        if self.gradual_steps < 1:
            raise ValueError("gradual_steps must be >= 1")
        if not 0 < self.lr_floor < self.lr_init:
            raise ValueError("need 0 < lr_floor < lr_init")
        if self.lr_drop_factor <= 1:
            raise ValueError("lr_drop_factor must exceed 1")
        if self.crop_size < 8:
            raise ValueError("crop_size must be >= 8")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.pool_ratio < 1:
            raise ValueError("pool_ratio must lie in (0, 1)")

    def network_config(self, channels: int) -> NetworkConfig:
        return NetworkConfig(self.hidden_layers, self.channels, self.kernel_size, channels, channels)

    def gradual_factors(self) -> list[float]:
        """Cumulative factors ``s**(i/m)`` for ``i = 1..m``; the last is exactly ``s``."""
        m = self.gradual_steps
        return [self.scale_factor ** (i / m) for i in range(1, m)] + [self.scale_factor]


@dataclass
class Father:
    image: np.ndarray
    size_ratio: float
    provenance: str


@dataclass
class FatherPool:
    """HR fathers sorted by decreasing size ratio; the first is the current base image."""

    entries: list
    factor: float

    def __len__(self):
        return len(self.entries)

    @property
    def ratios(self):
        return [e.size_ratio for e in self.entries]


def _son_viable(h: int, w: int, factor: float, min_son: int) -> bool:
    return min(h, w) / factor >= min_son


def build_father_pool(base: np.ndarray, cfg: ZssrConfig, factor: float | None = None,
                      extra=(), base_provenance: str = ORIGINAL) -> FatherPool:
    """Downscaled copies of ``base`` at ratios ``r**k`` plus any ``extra`` images.

    ``extra`` holds ``(image, provenance)`` pairs from earlier gradual steps;
    their ratio is their height relative to ``base``.  A father is kept only
    while its son (father / factor) keeps a min dimension of ``min_son_size``.
    """
    factor = cfg.scale_factor if factor is None else factor
    h, w = base.shape[:2]
    if not _son_viable(h, w, factor, cfg.min_son_size):
        raise ValueError(f"{h}x{w} image is too small to train at factor {factor:.4g} "
                         f"(sons need a min dimension of {cfg.min_son_size})")
    entries = [Father(base, 1.0, base_provenance)]
    k = 1
    while len(entries) < cfg.pool_cap:
        ratio = cfg.pool_ratio ** k
        fh, fw = scaled_size(h, ratio), scaled_size(w, ratio)
        if not _son_viable(fh, fw, factor, cfg.min_son_size):
            break
        if (fh, fw) != entries[-1].image.shape[:2]:
            entries.append(Father(resize_by(base, ratio, antialias=True, size=(fh, fw)), ratio, DOWNSCALED))
        k += 1
    for img, provenance in extra:
        eh, ew = img.shape[:2]
        ratio = eh / h
        if 0 < ratio < 1 and _son_viable(eh, ew, factor, cfg.min_son_size):
            entries.append(Father(img, ratio, provenance))
    head, rest = entries[0], sorted(entries[1:], key=lambda e: -e.size_ratio)
    return FatherPool([head] + rest[:cfg.pool_cap - 1], factor)


def sampling_weights(pool: FatherPool) -> np.ndarray:
    """Sampling probability proportional to father pixel count, i.e. ``ratio**2``."""
    if not len(pool):
        raise ValueError("empty father pool")
    w = np.array(pool.ratios, dtype=np.float64) ** 2
    return w / w.sum()


@dataclass
class TrainPair:
    input: np.ndarray
    target: np.ndarray
    geometry: Geometry
    father_index: int = 0


def lr_son(father: np.ndarray, cfg: ZssrConfig, factor: float, kernel: Kernel | None,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Downscale ``father`` and, with ``inject_noise``, add clamped Gaussian noise."""
    son = downscale(father, kernel, factor)
    if cfg.inject_noise:
        son = np.clip(son + rng.normal(0.0, cfg.noise_sigma, size=son.shape).astype(son.dtype), 0.0, 1.0)
    return son


def make_son(father: np.ndarray, cfg: ZssrConfig, factor: float, kernel: Kernel | None,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """The network input for ``father``: its LR son interpolated back to the father's size."""
    son = lr_son(father, cfg, factor, kernel, rng)
    return resize_by(son, factor, antialias=True, size=father.shape[:2])


def draw_train_pair(pool: FatherPool, cfg: ZssrConfig, rng: np.random.Generator,
                    kernel: Kernel | None = None, weights=None) -> TrainPair:
    """One random (input, target) crop: father by weight, geometry uniform, crop uniform."""
    if weights is None:
        weights = sampling_weights(pool)
    idx = int(rng.choice(len(pool), p=weights))
    geom = ALL_GEOMETRIES[int(rng.integers(len(ALL_GEOMETRIES)))]
    father = np.ascontiguousarray(apply_geometry(pool.entries[idx].image, geom))
    son_up = make_son(father, cfg, pool.factor, kernel, rng)
    fh, fw = father.shape[:2]
    ch, cw = min(cfg.crop_size, fh), min(cfg.crop_size, fw)
    top = int(rng.integers(fh - ch + 1))
    left = int(rng.integers(fw - cw + 1))
    win = (slice(top, top + ch), slice(left, left + cw))
    return TrainPair(son_up[win], father[win], geom, idx)


@dataclass
class LrScheduleState:
    current_lr: float
    loss_history: deque = field(default_factory=deque)
    last_check: int = 0
    drops: int = 0

    @classmethod
    def start(cls, cfg: ZssrConfig) -> "LrScheduleState":
        return cls(cfg.lr_init, deque(maxlen=cfg.window))

    def record(self, iteration: int, loss: float) -> None:
        self.loss_history.append((iteration, loss))


def fit_line(iterations, losses):
    """Least-squares slope per iteration and residual standard deviation."""
    t = np.asarray(iterations, dtype=np.float64)
    y = np.asarray(losses, dtype=np.float64)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    return float(slope), float(resid.std())


def lr_schedule_update(st: LrScheduleState, cfg: ZssrConfig, iteration: int):
    """Return ``("continue", lr)``, ``("drop", new_lr)`` or ``("stop", lr)``.

    Every ``check_period`` iterations, with a full window of losses recorded
    at the current rate, fit a line to the window.  If the loss the fit
    predicts to shed over one window is below ``fit_factor`` residual
    standard deviations, training at this rate has stalled: divide it.
    Dropping below ``lr_floor`` stops training.  The window restarts after
    each drop so every rate gets a full window of its own.
    """
    if iteration - st.last_check < cfg.check_period or len(st.loss_history) < cfg.window:
        return "continue", st.current_lr
    st.last_check = iteration
    its, losses = zip(*st.loss_history)
    slope, sigma = fit_line(its, losses)
    if -slope * cfg.window >= sigma * cfg.fit_factor:
        return "continue", st.current_lr
    new_lr = st.current_lr / cfg.lr_drop_factor
    if new_lr < cfg.lr_floor * (1 - 1e-9):
        return "stop", st.current_lr
    st.current_lr = new_lr
    st.drops += 1
    st.loss_history.clear()
    return "drop", new_lr


@dataclass
class TrainingSession:
    """Exclusive mutable state of one training run."""

    params: object
    adam: AdamState
    schedule: LrScheduleState
    pool: FatherPool
    rng: np.random.Generator
    kernel: Kernel | None
    weights: np.ndarray
    iteration: int = 0
    trace: list = field(default_factory=list)

    @classmethod
    def create(cls, pool: FatherPool, cfg: ZssrConfig, seed_seq: np.random.SeedSequence,
               kernel: Kernel | None = None) -> "TrainingSession":
        init_seq, data_seq = seed_seq.spawn(2)
        channels = pool.entries[0].image.shape[2]
        params = init_network(cfg.network_config(channels), np.random.Generator(np.random.PCG64(init_seq)),
                              dtype=np.dtype(cfg.dtype))
        return cls(params, AdamState.zeros(params), LrScheduleState.start(cfg), pool,
                   np.random.Generator(np.random.PCG64(data_seq)), kernel, sampling_weights(pool))


def train_step(session: TrainingSession, cfg: ZssrConfig) -> float:
    """Draw a pair, take one Adam step at the scheduled rate and record the loss."""
    pair = draw_train_pair(session.pool, cfg, session.rng, session.kernel, session.weights)
    dtype = session.params.dtype
    x = pair.input.astype(dtype, copy=False)
    cache = ForwardCache()
    pred = forward(session.params, x, cache)
    loss, grad = l1_loss(pred, pair.target.astype(dtype, copy=False))
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss at iteration {session.iteration}")
    grads = backward(session.params, cache, grad)
    lr = session.schedule.current_lr
    adam_step(session.params, grads, session.adam, lr)
    session.trace.append((session.iteration, loss, lr))
    session.schedule.record(session.iteration, loss)
    session.iteration += 1
    return loss


def train(session: TrainingSession, cfg: ZssrConfig) -> str:
    """Run until the schedule stops or ``max_iterations``; returns the stop reason."""
    while session.iteration < cfg.max_iterations:
        train_step(session, cfg)
        action, lr = lr_schedule_update(session.schedule, cfg, session.iteration)
        if action == "drop":
            log.debug("iteration %d: learning rate -> %g", session.iteration, lr)
        elif action == "stop":
            return "schedule"
    return "max_iterations"


def backproject(hr: np.ndarray, lr: np.ndarray, kernel: Kernel | None, s: float,
                iters: int = 8, tol: float = 1e-4) -> np.ndarray:
    """Iterative back-projection of ``hr`` onto the constraint ``downscale(hr) == lr``.

    The L1 consistency error never increases: an iteration that would raise
    it is discarded and the loop ends.
    """
    hh, hw = hr.shape[:2]
    lh, lw = lr.shape[:2]
    # sizes on a gradual ladder are rounded from the input size, so allow one pixel of slack
    if abs(hh / s - lh) > 1 or abs(hw / s - lw) > 1 or hr.shape[2] != lr.shape[2]:
        raise ValueError(f"LR {lr.shape} and HR {hr.shape} are not related by factor {s}")
    out = hr
    down = downscale(out, kernel, s, size=(lh, lw))
    err = float(np.abs(down - lr).mean())
    for _ in range(iters):
        correction = resize_by(lr - down, s, clamp=False, size=(hh, hw))
        if np.abs(correction).max() < tol:
            break
        cand = out + correction
        cand_down = downscale(cand, kernel, s, size=(lh, lw))
        cand_err = float(np.abs(cand_down - lr).mean())
        if cand_err > err:
            break
        out, down, err = cand, cand_down, cand_err
    return out


def predict(params, lr_img: np.ndarray, cfg: ZssrConfig, factor: float | None = None,
            kernel: Kernel | None = None, ensemble=ALL_GEOMETRIES, size=None) -> np.ndarray:
    """Geometric self-ensemble prediction with back-projection, clamped to [0, 1].

    Each transformed copy of ``lr_img`` is interpolated, passed through the
    network, mapped back and (optionally) back-projected; the per-pixel
    median of the copies is back-projected once more.
    """
    factor = cfg.scale_factor if factor is None else factor
    h, w = lr_img.shape[:2]
    out_h, out_w = size if size is not None else (scaled_size(h, factor), scaled_size(w, factor))
    dtype = params.dtype
    outputs = []
    for g in ensemble:
        x = np.ascontiguousarray(apply_geometry(lr_img, g))
        size = (out_w, out_h) if g.swaps_axes else (out_h, out_w)
        up = resize_by(x, factor, antialias=True, size=size).astype(dtype, copy=False)
        y = np.ascontiguousarray(apply_geometry(forward(params, up), g.inverse()))
        if cfg.use_backprojection:
            y = backproject(y, lr_img, kernel, factor, cfg.backprojection_iters, cfg.backprojection_tol)
        outputs.append(y)
    med = np.median(np.stack(outputs), axis=0).astype(dtype, copy=False)
    if cfg.use_backprojection:
        med = backproject(med, lr_img, kernel, factor, cfg.backprojection_iters, cfg.backprojection_tol)
    return np.clip(med, 0.0, 1.0)


@dataclass
class StepReport:
    step: int
    cumulative_factor: float
    step_factor: float
    pool_size: int
    iterations: int
    drops: int
    final_lr: float
    stopped_by: str
    wall_time: float
    trace: list


@dataclass
class RunReport:
    config: ZssrConfig
    input_shape: tuple
    output_shape: tuple = None
    steps: list = field(default_factory=list)

    def to_text(self, extra: dict | None = None) -> str:
        cfg = self.config
        kv = {
            "scale": cfg.scale_factor,
            "gradual_steps": cfg.gradual_steps,
            "gradual_factors": ",".join(f"{s.cumulative_factor:.6g}" for s in self.steps),
            "kernel": "bicubic" if cfg.kernel is None else f"{cfg.kernel.shape[0]}x{cfg.kernel.shape[1]}",
            "use_backprojection": cfg.use_backprojection,
            "inject_noise": cfg.inject_noise,
            "noise_sigma": cfg.noise_sigma,
            "crop_size": cfg.crop_size,
            "lr_init": cfg.lr_init,
            "lr_floor": cfg.lr_floor,
            "lr_drop_factor": cfg.lr_drop_factor,
            "max_iterations": cfg.max_iterations,
            "seed": cfg.seed,
            "input_shape": "x".join(map(str, self.input_shape)),
            "output_shape": "x".join(map(str, self.output_shape or ())),
        }
        if extra:
            kv.update(extra)
        for s in self.steps:
            p = f"step{s.step}"
            kv[f"{p}.factor"] = f"{s.step_factor:.6g}"
            kv[f"{p}.pool_size"] = s.pool_size
            kv[f"{p}.iterations"] = s.iterations
            kv[f"{p}.lr_drops"] = s.drops
            kv[f"{p}.stopped_by"] = s.stopped_by
            kv[f"{p}.wall_time_s"] = f"{s.wall_time:.2f}"
        lines = [f"{k}={v}" for k, v in kv.items()]
        lines.append("")
        lines.append("iter,loss,lr")
        if self.steps:
            lines.extend(f"{i},{loss:.8g},{lr:.3g}" for i, loss, lr in self.steps[-1].trace)
        return "\n".join(lines) + "\n"


def run_gradual(img: np.ndarray, cfg: ZssrConfig) -> tuple[np.ndarray, RunReport]:
    """Super-resolve ``img`` by ``cfg.scale_factor`` through ``cfg.gradual_steps`` rungs.

    Rung ``i`` trains a fresh network on the previous output (the input
    image for the first rung) and enlarges it by ``s_i / s_(i-1)``.  Earlier
    outputs and the input join later pools as extra fathers.  The supplied
    kernel describes the full factor, so it drives training only when there
    is a single rung; intermediate rungs use bicubic, and a multi-rung
    result is back-projected onto the input with the supplied kernel at the
    end.
    """
    dtype = np.dtype(cfg.dtype)
    base = img.astype(dtype, copy=False)
    report = RunReport(cfg, img.shape)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.gradual_steps)
    factors = cfg.gradual_factors()
    single = cfg.gradual_steps == 1
    history = []
    prev = 1.0
    for step, (cum, seed_seq) in enumerate(zip(factors, seeds), start=1):
        t0 = time.perf_counter()
        factor = cum / prev
        kernel = cfg.kernel if single else None
        pool = build_father_pool(base, cfg, factor, extra=history,
                                 base_provenance=ORIGINAL if step == 1 else SYNTHESIZED)
        session = TrainingSession.create(pool, cfg, seed_seq, kernel)
        stopped_by = train(session, cfg)
        if stopped_by == "max_iterations":
            log.info("step %d hit the iteration cap (%d)", step, cfg.max_iterations)
        size = (scaled_size(img.shape[0], cum), scaled_size(img.shape[1], cum))
        out = predict(session.params, base, cfg, factor, kernel, size=size)
        report.steps.append(StepReport(step, cum, factor, len(pool), session.iteration,
                                       session.schedule.drops, session.schedule.current_lr,
                                       stopped_by, time.perf_counter() - t0, session.trace))
        log.info("step %d/%d: x%.4g, %d iterations, %d lr drops", step, cfg.gradual_steps,
                 cum, session.iteration, session.schedule.drops)
        history.append((base, ORIGINAL if step == 1 else SYNTHESIZED))
        base = out
        prev = cum

    if not single and cfg.use_backprojection:
        base = backproject(base, img.astype(dtype, copy=False), cfg.kernel, cfg.scale_factor,
                           cfg.backprojection_iters, cfg.backprojection_tol)
    out = np.clip(base, 0.0, 1.0)
    report.output_shape = out.shape
    return out, report


def zssr(img: np.ndarray, scale_factor: float = 2.0, **kw) -> np.ndarray:
    """Convenience wrapper: ``run_gradual`` with keyword config overrides, image only."""
    return run_gradual(img, replace(ZssrConfig(), scale_factor=scale_factor, **kw))[0]
