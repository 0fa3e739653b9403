"""Unpaired translator training with FID-based early stopping.

One step updates both generators jointly (adversarial + cycle losses), then
each discriminator against a replay pool of past fakes. After every epoch
the monitor compares real source patches against target patches translated
into the source stain; training stops when FID has stalled for the
configured patience, and the best-FID checkpoint is what gets kept.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from stainshift.translator.losses import (
    cycle_loss,
    identity_loss,
    lsgan_disc_loss,
    lsgan_gen_loss,
)
from stainshift.translator.networks import (
    TranslatorConfig,
    build_discriminator,
    build_generator,
)
from stainshift.translator.pool import ImagePool
from stainshift.util import derive_seed, read_json, write_json
from stainshift.validation import check_image_batch

STOP_FID_PATIENCE = "fid_patience"
STOP_MAX_EPOCHS = "max_epochs"
STOP_MONITOR_ERROR = "monitor_error"

CHECKPOINT_FILES = ("gen_ab.pt", "gen_ba.pt", "disc_a.pt", "disc_b.pt")


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the last per-component values."""

    def __init__(self, message: str, components: dict):
        super().__init__(f"{message}; components: {components}")
        self.components = components


@dataclass
class StepReport:
    """Loss components of one optimization step."""

    g_adv_ab: float
    g_adv_ba: float
    cycle_a: float
    cycle_b: float
    d_a: float
    d_b: float
    identity: float | None = None

    def to_dict(self) -> dict:
        out = {
            "g_adv_ab": self.g_adv_ab,
            "g_adv_ba": self.g_adv_ba,
            "cycle_a": self.cycle_a,
            "cycle_b": self.cycle_b,
            "d_a": self.d_a,
            "d_b": self.d_b,
        }
        if self.identity is not None:
            out["identity"] = self.identity
        return out


def to_torch(images: np.ndarray) -> torch.Tensor:
    """(n, h, w, 3) floats in [0, 1] to (n, 3, h, w) tensors in [-1, 1]."""
    images = check_image_batch(images)
    tensor = torch.from_numpy(images.copy()).permute(0, 3, 1, 2)
    return tensor * 2.0 - 1.0


def to_numpy(tensor: torch.Tensor) -> np.ndarray:
    """(n, 3, h, w) tensors in [-1, 1] back to (n, h, w, 3) floats in [0, 1]."""
    arr = tensor.detach().permute(0, 2, 3, 1).cpu().numpy()
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)


class TranslatorPair:
    """Two generators and two critics of one translation pair, plus the
    optimizers and replay pools that constitute its training state."""

    DIRECTIONS = ("a_to_b", "b_to_a")

    def __init__(self, cfg: TranslatorConfig, domain_a: str = "A",
                 domain_b: str = "B", seed: int = 0):
        if domain_a == domain_b:
            raise ValueError(f"domains must differ, both are {domain_a!r}")
        self.cfg = cfg
        self.domain_a = domain_a
        self.domain_b = domain_b
        self.seed = seed
        self.step_count = 0
        self.gen_ab = build_generator(cfg, derive_seed(seed, "gen_ab"))
        self.gen_ba = build_generator(cfg, derive_seed(seed, "gen_ba"))
        self.disc_a = build_discriminator(cfg, derive_seed(seed, "disc_a"))
        self.disc_b = build_discriminator(cfg, derive_seed(seed, "disc_b"))
        betas = (cfg.beta1, 0.999)
        self.opt_g = torch.optim.Adam(
            itertools.chain(self.gen_ab.parameters(), self.gen_ba.parameters()),
            lr=cfg.learning_rate, betas=betas,
        )
        self.opt_d_a = torch.optim.Adam(self.disc_a.parameters(),
                                        lr=cfg.learning_rate, betas=betas)
        self.opt_d_b = torch.optim.Adam(self.disc_b.parameters(),
                                        lr=cfg.learning_rate, betas=betas)
        self.pool_a = ImagePool(cfg.fake_pool_size)
        self.pool_b = ImagePool(cfg.fake_pool_size)

    def _networks(self) -> dict:
        return {"gen_ab": self.gen_ab, "gen_ba": self.gen_ba,
                "disc_a": self.disc_a, "disc_b": self.disc_b}

    def train_mode(self) -> None:
        for net in self._networks().values():
            net.train()

    def eval_mode(self) -> None:
        for net in self._networks().values():
            net.eval()

    def generator_for(self, direction: str):
        if direction not in self.DIRECTIONS:
            raise ValueError(
                f"direction must be one of {self.DIRECTIONS}, got {direction!r}"
            )
        return self.gen_ab if direction == "a_to_b" else self.gen_ba

    def translate(self, images: np.ndarray, direction: str = "a_to_b",
                  batch_size: int = 64) -> np.ndarray:
        """Translate images across domains; numpy in, numpy out, [0, 1].

        Normalization is per-sample, so results do not depend on how the
        batch is composed.
        """
        gen = self.generator_for(direction)
        images = check_image_batch(images, size=self.cfg.image_size)
        was_training = gen.training
        gen.eval()
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                x = to_torch(images[start:start + batch_size])
                chunks.append(to_numpy(gen(x)))
        if was_training:
            gen.train()
        return np.concatenate(chunks, axis=0)

    def state_dicts(self) -> dict:
        return {name: {k: v.clone() for k, v in net.state_dict().items()}
                for name, net in self._networks().items()}

    def load_state_dicts(self, states: dict) -> None:
        for name, net in self._networks().items():
            net.load_state_dict(states[name])

    def save(self, out_dir: str | Path, *, epoch: int = -1,
             fid: float | None = None, losses: dict | None = None) -> Path:
        """Write weights plus a metadata JSON describing the checkpoint."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for fname, net in zip(CHECKPOINT_FILES, self._networks().values()):
            torch.save(net.state_dict(), out_dir / fname)
        write_json(out_dir / "metadata.json", {
            "epoch": epoch,
            "fid": fid,
            "losses": losses or {},
            "config_hash": self.cfg.hash,
            "config": self.cfg.to_dict(),
            "domain_a": self.domain_a,
            "domain_b": self.domain_b,
            "step_count": self.step_count,
        })
        return out_dir

    @classmethod
    def load(cls, checkpoint_dir: str | Path) -> "TranslatorPair":
        checkpoint_dir = Path(checkpoint_dir)
        meta_path = checkpoint_dir / "metadata.json"
        if not meta_path.is_file():
            raise FileNotFoundError(f"no checkpoint metadata at {meta_path}")
        meta = read_json(meta_path)
        cfg = TranslatorConfig(**meta["config"])
        if cfg.hash != meta["config_hash"]:
            raise ValueError(
                f"checkpoint config hash mismatch in {checkpoint_dir}: "
                f"stored {meta['config_hash']}, recomputed {cfg.hash}"
            )
        pair = cls(cfg, domain_a=meta["domain_a"], domain_b=meta["domain_b"])
        for fname, net in zip(CHECKPOINT_FILES, pair._networks().values()):
            state = torch.load(checkpoint_dir / fname, weights_only=True)
            net.load_state_dict(state)
        pair.step_count = meta.get("step_count", 0)
        return pair


def translate(pair: TranslatorPair, images: np.ndarray,
              direction: str = "a_to_b", batch_size: int = 64) -> np.ndarray:
    return pair.translate(images, direction=direction, batch_size=batch_size)


def train_step(pair: TranslatorPair, batch_a: np.ndarray, batch_b: np.ndarray,
               rng: np.random.Generator) -> StepReport:
    """One joint generator update plus one update of each discriminator.

    Raises TrainingDiverged (with the offending component values) if any
    loss is non-finite.
    """
    cfg = pair.cfg
    xa = to_torch(batch_a)
    xb = to_torch(batch_b)

    pair.opt_g.zero_grad()
    fake_b = pair.gen_ab(xa)
    fake_a = pair.gen_ba(xb)
    rec_a = pair.gen_ba(fake_b)
    rec_b = pair.gen_ab(fake_a)
    g_adv_ab = lsgan_gen_loss(pair.disc_b(fake_b))
    g_adv_ba = lsgan_gen_loss(pair.disc_a(fake_a))
    cyc_a = cycle_loss(xa, rec_a)
    cyc_b = cycle_loss(xb, rec_b)
    g_total = g_adv_ab + g_adv_ba + cfg.lambda_cycle * (cyc_a + cyc_b)
    idt_value = None
    if cfg.use_identity_loss:
        idt = identity_loss(xa, pair.gen_ba(xa)) + identity_loss(xb, pair.gen_ab(xb))
        g_total = g_total + cfg.identity_weight_factor * cfg.lambda_cycle * idt
        idt_value = idt.item()
    g_total.backward()
    pair.opt_g.step()

    pooled_a = pair.pool_a.query(fake_a, rng)
    pooled_b = pair.pool_b.query(fake_b, rng)
    pair.opt_d_a.zero_grad()
    d_a = lsgan_disc_loss(pair.disc_a(xa), pair.disc_a(pooled_a))
    d_a.backward()
    pair.opt_d_a.step()
    pair.opt_d_b.zero_grad()
    d_b = lsgan_disc_loss(pair.disc_b(xb), pair.disc_b(pooled_b))
    d_b.backward()
    pair.opt_d_b.step()

    report = StepReport(
        g_adv_ab=g_adv_ab.item(), g_adv_ba=g_adv_ba.item(),
        cycle_a=cyc_a.item(), cycle_b=cyc_b.item(),
        d_a=d_a.item(), d_b=d_b.item(), identity=idt_value,
    )
    values = report.to_dict()
    if not all(np.isfinite(v) for v in values.values()):
        raise TrainingDiverged("training loss went non-finite", values)
    pair.step_count += 1
    return report


@dataclass
class TrainResult:
    """Outcome of one training run."""

    stop_epoch: int
    stop_reason: str
    best_epoch: int
    best_fid: float | None
    history: list[dict] = field(default_factory=list)
    monitor_history: list[dict] = field(default_factory=list)
    checkpoints: dict[str, str] = field(default_factory=dict)
    monitor_error: str | None = None


def _domain_images(domain, size: int) -> np.ndarray:
    if isinstance(domain, np.ndarray):
        return check_image_batch(domain, size=size)
    from stainshift.datakit.ops import load_images

    return check_image_batch(load_images(domain)[0], size=size)


def _sample_batch(images: np.ndarray, batch_size: int,
                  rng: np.random.Generator) -> np.ndarray:
    replace = len(images) < batch_size
    idx = rng.choice(len(images), size=batch_size, replace=replace)
    return images[idx]


def _write_history_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "g_loss", "d_loss", "cycle_loss", "fid"])
        for row in rows:
            fid = "" if row["fid"] is None else f"{row['fid']:.8f}"
            writer.writerow([
                row["epoch"], f"{row['g_loss']:.6f}", f"{row['d_loss']:.6f}",
                f"{row['cycle_loss']:.6f}", fid,
            ])


def train_translator(
    domain_a,
    domain_b,
    cfg: TranslatorConfig,
    monitor=None,
    max_epochs: int = 50,
    *,
    seed: int = 0,
    out_dir: str | Path | None = None,
    fid_samples: int | None = None,
    snapshot_epochs: tuple[int, ...] = (),
    pair: TranslatorPair | None = None,
    domain_a_id: str = "A",
    domain_b_id: str = "B",
) -> tuple[TranslatorPair, TrainResult]:
    """Train a translator pair between two unpaired image collections.

    `domain_a` / `domain_b` are manifests or (n, h, w, 3) arrays in [0, 1].
    With a monitor, each epoch submits (fixed real sample from A, current
    translation of a fixed sample from B) and stops on its verdict; the
    pair is left at, and the "best" checkpoint holds, the best-FID epoch's
    weights. A monitor failure disables monitoring and training runs out to
    max_epochs with stop_reason "monitor_error". Without a monitor it
    always runs to max_epochs.
    """
    if max_epochs < 1:
        raise ValueError(f"max_epochs must be >= 1, got {max_epochs}")
    images_a = _domain_images(domain_a, cfg.image_size)
    images_b = _domain_images(domain_b, cfg.image_size)
    if pair is None:
        pair = TranslatorPair(cfg, domain_a=domain_a_id, domain_b=domain_b_id,
                              seed=derive_seed(seed, "pair"))
    batch_rng = np.random.default_rng(derive_seed(seed, "batches"))
    pool_rng = np.random.default_rng(derive_seed(seed, "pool"))
    steps = cfg.steps_per_epoch or max(
        1, -(-max(len(images_a), len(images_b)) // cfg.batch_size)
    )
    out_dir = Path(out_dir) if out_dir is not None else None

    eval_a = eval_b = None
    if monitor is not None:
        n_fid = fid_samples or min(len(images_a), len(images_b))
        if n_fid < 2:
            raise ValueError("need at least 2 images per domain for FID")
        if n_fid > min(len(images_a), len(images_b)):
            raise ValueError(
                f"fid_samples={n_fid} exceeds the smaller domain "
                f"({min(len(images_a), len(images_b))} images)"
            )
        fid_rng = np.random.default_rng(derive_seed(seed, "fid-sample"))
        eval_a = images_a[np.sort(fid_rng.choice(len(images_a), n_fid, replace=False))]
        eval_b = images_b[np.sort(fid_rng.choice(len(images_b), n_fid, replace=False))]

    result = TrainResult(stop_epoch=0, stop_reason=STOP_MAX_EPOCHS,
                         best_epoch=-1, best_fid=None)
    best_states = None
    monitor_failed = False

    for epoch in range(1, max_epochs + 1):
        pair.train_mode()
        sums = {"g": 0.0, "d": 0.0, "cycle": 0.0}
        for _ in range(steps):
            report = train_step(
                pair,
                _sample_batch(images_a, cfg.batch_size, batch_rng),
                _sample_batch(images_b, cfg.batch_size, batch_rng),
                pool_rng,
            )
            sums["g"] += report.g_adv_ab + report.g_adv_ba
            sums["d"] += report.d_a + report.d_b
            sums["cycle"] += report.cycle_a + report.cycle_b
        epoch_row = {
            "epoch": epoch,
            "g_loss": sums["g"] / steps,
            "d_loss": sums["d"] / steps,
            "cycle_loss": sums["cycle"] / steps,
            "fid": None,
        }
        result.stop_epoch = epoch

        decision = None
        if monitor is not None and not monitor_failed:
            try:
                translated = pair.translate(eval_b, direction="b_to_a")
                decision = monitor.evaluate(epoch, eval_a, translated)
                epoch_row["fid"] = monitor.state.history[-1][1]
            except Exception as err:  # noqa: BLE001 - monitor must not kill training
                monitor_failed = True
                result.monitor_error = f"{type(err).__name__}: {err}"
                result.stop_reason = STOP_MONITOR_ERROR
            else:
                if monitor.best_epoch == epoch:
                    result.best_epoch = epoch
                    result.best_fid = monitor.best_fid
                    best_states = pair.state_dicts()
                    if out_dir is not None:
                        path = pair.save(out_dir / "best", epoch=epoch,
                                         fid=monitor.best_fid,
                                         losses={k: epoch_row[k] for k in
                                                 ("g_loss", "d_loss", "cycle_loss")})
                        result.checkpoints["best"] = str(path)

        result.history.append(epoch_row)
        if epoch in snapshot_epochs and out_dir is not None:
            path = pair.save(out_dir / f"epoch_{epoch:03d}", epoch=epoch,
                             fid=epoch_row["fid"],
                             losses={k: epoch_row[k] for k in
                                     ("g_loss", "d_loss", "cycle_loss")})
            result.checkpoints[f"epoch_{epoch:03d}"] = str(path)
        if decision == "stop":
            result.stop_reason = STOP_FID_PATIENCE
            break

    if monitor is not None and not monitor_failed:
        result.monitor_history = monitor.history_rows()
    if best_states is not None:
        pair.load_state_dicts(best_states)
    if out_dir is not None:
        if "best" not in result.checkpoints:
            label = "final"
            path = pair.save(out_dir / label, epoch=result.stop_epoch,
                             fid=result.best_fid, losses={})
            result.checkpoints[label] = str(path)
        _write_history_csv(out_dir / "history.csv", result.history)
        if monitor is not None and not monitor_failed:
            monitor.write_history_csv(out_dir / "fid_history.csv")
    return pair, result
