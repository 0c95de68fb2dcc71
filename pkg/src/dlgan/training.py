"""Three-phase training schedule, losses, checkpoints, and synthesis.

Phase 1 pretrains the autoencoder on window reconstruction. Phase 2
freezes the encoder and pretrains the feature extractor plus the sequence
reconstructor on hidden-sequence reconstruction (teacher forced). Phase 3
alternates three sub-steps per batch: (a) generators (both generators and
the extractor) on the adversarial losses plus the supervised hidden
reconstruction term, (b) encoder/decoder fine-tuning on both reconstruction
losses, (c) both discriminators on the standard GAN loss. Each sub-step
updates exactly its own parameter group.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .autoencoder import Decoder, Encoder, reconstruction_loss
from .data import NormStats, denormalize, iter_batches
from .errors import (
    ConfigInvalid,
    CorruptFile,
    DivergenceDetected,
    NonFiniteLogit,
    UntrainedCheckpoint,
    VersionMismatch,
)
from .extractor import TemporalFeatureExtractor
from .latent_gan import Discriminator1, Generator1, noise_array, sample_noise
from .nn import Adam, Module, no_grad
from .nn import tensor as T
from .nn.tensor import Tensor
from .reconstructor import TEACHER_FORCED, Discriminator2, Generator2

CHECKPOINT_MAGIC = b"DLGANCK\x00"
CHECKPOINT_VERSION = 1
DTYPE = np.float32


@dataclass
class TrainingConfig:
    window_length: int = 24          # T
    latent_width: int = None         # N; defaults to min(4*M, 24)
    feature_width: int = None        # F; defaults to N
    patch_length: int = 4            # p
    embed_width: int = 16            # e
    heads: int = 4
    trend_window: int = 5            # w
    noise_length: int = None         # L_z; defaults to T
    noise_width: int = None          # D_z; defaults to N
    stride: int = 1
    lr_pretrain: float = 1e-3
    lr_joint: float = 2e-4
    batch_size: int = 128
    epochs_autoencoder: int = 50
    epochs_latent_path: int = 50
    epochs_joint: int = 50
    seed: int = 0
    no_extractor: bool = False
    no_reconstructor: bool = False
    scaled_cross_attention: bool = False
    d2_real_reconstruction_as_real: bool = False
    eval_fraction: float = 0.2

    def resolved(self, n_features):
        cfg = replace(self)
        if cfg.latent_width is None:
            cfg.latent_width = min(4 * n_features, 24)
        if cfg.feature_width is None:
            cfg.feature_width = cfg.latent_width
        if cfg.noise_length is None:
            cfg.noise_length = cfg.window_length
        if cfg.noise_width is None:
            cfg.noise_width = cfg.latent_width
        cfg.n_features = n_features
        return cfg

    def validate(self):
        def positive(name):
            if getattr(self, name) is None or getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        for name in ("window_length", "latent_width", "feature_width", "patch_length",
                     "embed_width", "heads", "trend_window", "noise_length",
                     "noise_width", "stride", "batch_size", "epochs_autoencoder",
                     "epochs_latent_path", "epochs_joint"):
            positive(name)
        if self.window_length % self.patch_length != 0:
            raise ConfigInvalid(
                f"window_length ({self.window_length}) not divisible by "
                f"patch_length ({self.patch_length})"
            )
        if self.embed_width % self.heads != 0:
            raise ConfigInvalid(f"embed_width not divisible by heads ({self.heads})")
        if self.noise_width % self.heads != 0:
            raise ConfigInvalid(f"noise_width not divisible by heads ({self.heads})")
        if self.trend_window % 2 == 0 or self.trend_window > self.noise_length:
            raise ConfigInvalid("trend_window must be odd and <= noise_length")
        if self.lr_pretrain <= 0 or self.lr_joint <= 0:
            raise ConfigInvalid("learning rates must be > 0")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ConfigInvalid("eval_fraction must be in [0, 1)")
        return self


# TrainingConfig.resolved attaches the feature count discovered from data
TrainingConfig.n_features = None


@dataclass
class LossRecord:
    phase: int
    epoch: int
    l_r_ae: float = None
    l_r_h: float = None
    l_g: float = None
    l_d: float = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def finite(self):
        return all(v is None or np.isfinite(v)
                   for v in (self.l_r_ae, self.l_r_h, self.l_g, self.l_d))


def gan_loss(real_logits, fake_logits, side):
    """Standard GAN loss from logits.

    discriminator: pooled mean binary cross-entropy with real -> 1 and
    fake -> 0. generator: non-saturating form, mean BCE of the fake logits
    against label 1 (real logits are ignored and may be None).
    """
    if side == "generator":
        logits = fake_logits
        if not np.isfinite(logits.data).all():
            raise NonFiniteLogit("non-finite fake logits")
        return T.bce_with_logits(logits, np.ones(logits.shape))
    if side == "discriminator":
        for item in (real_logits, fake_logits):
            if not np.isfinite(item.data).all():
                raise NonFiniteLogit("non-finite logits")
        pooled = T.concat([real_logits, fake_logits], axis=0)
        labels = np.concatenate([
            np.ones(real_logits.shape), np.zeros(fake_logits.shape)
        ])
        return T.bce_with_logits(pooled, labels)
    raise ValueError(f"unknown side {side!r}")


class DlganModel(Module):
    """All trainable components, built deterministically from (config, seed)."""

    def __init__(self, config, rng=None):
        cfg = config
        if cfg.n_features is None:
            raise ConfigInvalid("config must be resolved against a dataset first")
        rng = np.random.default_rng([cfg.seed, 0xD16A]) if rng is None else rng
        self.config = cfg
        self.encoder = Encoder(cfg.n_features, cfg.latent_width, rng, dtype=DTYPE)
        self.decoder = Decoder(cfg.latent_width, cfg.n_features, rng, dtype=DTYPE)
        self.extractor = TemporalFeatureExtractor(
            cfg.latent_width, cfg.window_length, cfg.patch_length, cfg.embed_width,
            cfg.heads, cfg.feature_width, rng, dtype=DTYPE,
            basic_mode=cfg.no_extractor,
        )
        self.generator1 = Generator1(
            cfg.noise_width, cfg.heads, cfg.feature_width, cfg.trend_window, rng,
            dtype=DTYPE, scaled_cross_attention=cfg.scaled_cross_attention,
        )
        self.generator2 = Generator2(
            cfg.latent_width, cfg.feature_width, cfg.window_length, rng,
            dtype=DTYPE, sequence_mode=cfg.no_reconstructor,
        )
        self.discriminator1 = Discriminator1(cfg.feature_width, rng, dtype=DTYPE)
        self.discriminator2 = Discriminator2(
            cfg.latent_width, cfg.feature_width, rng, dtype=DTYPE)

    # parameter groups -----------------------------------------------------
    def autoencoder_params(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def latent_path_params(self):
        return self.extractor.parameters() + self.generator2.parameters()

    def generator_params(self):
        return (self.generator1.parameters() + self.generator2.parameters()
                + self.extractor.parameters())

    def discriminator_params(self):
        return self.discriminator1.parameters() + self.discriminator2.parameters()

    def zero_all_grads(self):
        for p in self.parameters():
            p.grad = None

    # forward paths ----------------------------------------------------------
    def real_feature(self, hidden):
        """Feature representation of a real hidden batch; a vector per window
        normally, a per-step sequence under the bottleneck ablation."""
        return self.extractor(hidden, return_sequence=self.config.no_reconstructor)

    def fake_feature(self, z):
        return self.generator1(z, return_sequence=self.config.no_reconstructor)

    def reconstruct_hidden(self, feature, target=None):
        """Rebuild a hidden sequence from a feature representation.

        With a target the rebuild is teacher forced (real path); without it
        the rebuild is autoregressive (synthesis path). The bottleneck
        ablation maps feature sequences directly in both cases.
        """
        if self.config.no_reconstructor:
            return self.generator2.map_sequence(feature)
        if target is not None:
            return self.generator2.reconstruct(feature, TEACHER_FORCED, target=target)
        return self.generator2.reconstruct(feature)

    def feature_logit(self, feature):
        """Feature discriminator logit; sequences are judged by final state."""
        if self.config.no_reconstructor:
            feature = feature[:, -1, :]
        return self.discriminator1(feature)


class Trainer:
    def __init__(self, config, train_windows, norm_stats=None):
        config.validate()
        self.config = config
        self.norm_stats = norm_stats
        self.windows = np.ascontiguousarray(train_windows, dtype=DTYPE)
        self.model = DlganModel(config)
        self.batch_rng = np.random.default_rng([config.seed, 0xBA7C4])
        self.noise_index = 0
        self.phase_completed = 0
        self.epoch_counters = {"autoencoder": 0, "latent_path": 0, "joint": 0}
        m = self.model
        self.opt_autoencoder = Adam(m.autoencoder_params(), lr=config.lr_pretrain)
        self.opt_latent_path = Adam(m.latent_path_params(), lr=config.lr_pretrain)
        self.opt_generators = Adam(m.generator_params(), lr=config.lr_joint)
        self.opt_autoencoder_joint = Adam(m.autoencoder_params(), lr=config.lr_joint)
        self.opt_discriminators = Adam(m.discriminator_params(), lr=config.lr_joint)

    # noise ------------------------------------------------------------------
    def _next_noise(self, batch):
        cfg = self.config
        seqs = sample_noise(batch, cfg.noise_length, cfg.noise_width,
                            cfg.seed, self.noise_index)
        self.noise_index += batch
        return noise_array(seqs, dtype=DTYPE)

    @staticmethod
    def _check(record):
        if not record.finite():
            raise DivergenceDetected(f"non-finite loss at {record}")
        return record

    # phase 1 ------------------------------------------------------------
    def pretrain_autoencoder(self, on_record=None):
        """Minimize window reconstruction error; autoencoder weights only."""
        records = []
        for _ in range(self.config.epochs_autoencoder):
            losses = []
            for batch in iter_batches(self.windows, self.config.batch_size, self.batch_rng):
                x = Tensor(batch)
                hidden = self.model.encoder(x)
                rebuilt = self.model.decoder(hidden)
                loss = reconstruction_loss(x, rebuilt)
                T.backward(loss)
                self.opt_autoencoder.step()
                self.model.zero_all_grads()
                losses.append(loss.item())
            self.epoch_counters["autoencoder"] += 1
            record = self._check(LossRecord(
                phase=1, epoch=self.epoch_counters["autoencoder"],
                l_r_ae=float(np.mean(losses))))
            records.append(record)
            if on_record:
                on_record(record)
        self.phase_completed = max(self.phase_completed, 1)
        return records

    # phase 2 ------------------------------------------------------------
    def _latent_reconstruction(self, batch):
        """Hidden-sequence reconstruction loss with the encoder frozen."""
        with no_grad():
            hidden = self.model.encoder(Tensor(batch)).data
        target = Tensor(hidden)
        feature = self.model.real_feature(target)
        rebuilt = self.model.reconstruct_hidden(feature, target=target)
        return reconstruction_loss(target, rebuilt)

    def pretrain_latent_path(self, on_record=None):
        """Train extractor plus reconstructor on teacher-forced hidden
        reconstruction; the encoder stays frozen."""
        records = []
        for _ in range(self.config.epochs_latent_path):
            losses = []
            for batch in iter_batches(self.windows, self.config.batch_size, self.batch_rng):
                loss = self._latent_reconstruction(batch)
                T.backward(loss)
                self.opt_latent_path.step()
                self.model.zero_all_grads()
                losses.append(loss.item())
            self.epoch_counters["latent_path"] += 1
            record = self._check(LossRecord(
                phase=2, epoch=self.epoch_counters["latent_path"],
                l_r_h=float(np.mean(losses))))
            records.append(record)
            if on_record:
                on_record(record)
        self.phase_completed = max(self.phase_completed, 2)
        return records

    # phase 3 ------------------------------------------------------------
    def joint_step(self, batch, z=None):
        """One joint iteration: generators, autoencoder, discriminators."""
        m = self.model
        if z is None:
            z = self._next_noise(len(batch))

        # (a) generators + extractor
        with no_grad():
            hidden_const = m.encoder(Tensor(batch)).data
        target = Tensor(hidden_const)
        feat_real = m.real_feature(target)
        feat_fake = m.fake_feature(Tensor(z))
        rebuilt_real = m.reconstruct_hidden(feat_real, target=target)
        rebuilt_fake = m.reconstruct_hidden(feat_fake)
        y1_fake = m.feature_logit(feat_fake)
        y2_fake = T.concat([m.discriminator2(rebuilt_real),
                            m.discriminator2(rebuilt_fake)], axis=0)
        supervised = reconstruction_loss(target, rebuilt_real)
        loss_g = gan_loss(None, y1_fake, "generator") \
            + gan_loss(None, y2_fake, "generator") + supervised
        T.backward(loss_g)
        self.opt_generators.step()
        m.zero_all_grads()

        # (b) autoencoder fine-tuning on both reconstruction losses
        x = Tensor(batch)
        hidden = m.encoder(x)
        rebuilt_x = m.decoder(hidden)
        l_ae = reconstruction_loss(x, rebuilt_x)
        feat_real_b = m.real_feature(hidden)
        rebuilt_hidden = m.reconstruct_hidden(feat_real_b, target=hidden)
        l_h = reconstruction_loss(hidden, rebuilt_hidden)
        T.backward(l_ae + l_h)
        self.opt_autoencoder_joint.step()
        m.zero_all_grads()

        # (c) discriminators on frozen generator outputs
        with no_grad():
            hidden_c = m.encoder(Tensor(batch)).data
            feat_real_c = m.real_feature(Tensor(hidden_c))
            feat_fake_c = m.fake_feature(Tensor(z))
            rebuilt_real_c = m.reconstruct_hidden(
                feat_real_c, target=Tensor(hidden_c)).data
            rebuilt_fake_c = m.reconstruct_hidden(feat_fake_c).data
            if self.config.no_reconstructor:
                feat_real_c = feat_real_c.data[:, -1, :]
                feat_fake_c = feat_fake_c.data[:, -1, :]
            else:
                feat_real_c = feat_real_c.data
                feat_fake_c = feat_fake_c.data
        y1 = gan_loss(m.discriminator1(Tensor(feat_real_c)),
                      m.discriminator1(Tensor(feat_fake_c)), "discriminator")
        if self.config.d2_real_reconstruction_as_real:
            real_side = T.concat([m.discriminator2(Tensor(hidden_c)),
                                  m.discriminator2(Tensor(rebuilt_real_c))], axis=0)
            fake_side = m.discriminator2(Tensor(rebuilt_fake_c))
        else:
            real_side = m.discriminator2(Tensor(hidden_c))
            fake_side = T.concat([m.discriminator2(Tensor(rebuilt_real_c)),
                                  m.discriminator2(Tensor(rebuilt_fake_c))], axis=0)
        y2 = gan_loss(real_side, fake_side, "discriminator")
        loss_d = y1 + y2
        T.backward(loss_d)
        self.opt_discriminators.step()
        m.zero_all_grads()

        return self._check(LossRecord(
            phase=3, epoch=self.epoch_counters["joint"],
            l_r_ae=l_ae.item(), l_r_h=l_h.item(),
            l_g=loss_g.item(), l_d=loss_d.item()))

    def train_joint(self, on_record=None):
        records = []
        for _ in range(self.config.epochs_joint):
            step_records = []
            for batch in iter_batches(self.windows, self.config.batch_size, self.batch_rng):
                step_records.append(self.joint_step(batch))
            self.epoch_counters["joint"] += 1
            record = self._check(LossRecord(
                phase=3, epoch=self.epoch_counters["joint"],
                l_r_ae=float(np.mean([r.l_r_ae for r in step_records])),
                l_r_h=float(np.mean([r.l_r_h for r in step_records])),
                l_g=float(np.mean([r.l_g for r in step_records])),
                l_d=float(np.mean([r.l_d for r in step_records]))))
            records.append(record)
            if on_record:
                on_record(record)
        self.phase_completed = max(self.phase_completed, 3)
        return records

    def train(self, on_record=None, checkpoint_path=None):
        """Run phases 1 -> 2 -> 3, checkpointing after every finite epoch.

        A divergence aborts before the failing epoch is recorded, so the
        checkpoint on disk always holds the last good state.
        """
        records = []

        def hook(record):
            records.append(record)
            if checkpoint_path is not None:
                self.checkpoint().save(checkpoint_path)
            if on_record:
                on_record(record)

        self.pretrain_autoencoder(hook)
        self.pretrain_latent_path(hook)
        self.train_joint(hook)
        return records

    # synthesis ---------------------------------------------------------
    def synthesize(self, count, seed=None):
        return synthesize(self.checkpoint(), count, seed=seed, model=self.model)

    # checkpointing -------------------------------------------------------
    def checkpoint(self):
        return Checkpoint(
            config=self.config,
            norm_stats=self.norm_stats,
            arrays={k: v.copy() for k, v in self.model.state_arrays().items()},
            rng_state=self.batch_rng.bit_generator.state,
            noise_index=self.noise_index,
            phase_completed=self.phase_completed,
            epoch_counters=dict(self.epoch_counters),
        )

    @classmethod
    def from_checkpoint(cls, ckpt, train_windows):
        trainer = cls(ckpt.config, train_windows, norm_stats=ckpt.norm_stats)
        trainer.model.load_state_arrays(ckpt.arrays)
        trainer.batch_rng.bit_generator.state = ckpt.rng_state
        trainer.noise_index = ckpt.noise_index
        trainer.phase_completed = ckpt.phase_completed
        trainer.epoch_counters = dict(ckpt.epoch_counters)
        return trainer


def synthesize(checkpoint, count, seed=None, model=None, denormalized=True):
    """Generate windows end to end: noise -> feature -> hidden -> decode.

    Returns an array of ``count`` windows, in original units when stats are
    available and ``denormalized`` is set, otherwise in (0, 1).
    """
    if checkpoint.phase_completed < 3:
        raise UntrainedCheckpoint(
            f"checkpoint finished phase {checkpoint.phase_completed} of 3")
    cfg = checkpoint.config
    if model is None:
        model = DlganModel(cfg)
        model.load_state_arrays(checkpoint.arrays)
    seed = cfg.seed if seed is None else seed
    out = []
    with no_grad():
        for start in range(0, count, cfg.batch_size):
            n = min(cfg.batch_size, count - start)
            z = noise_array(sample_noise(n, cfg.noise_length, cfg.noise_width,
                                         seed, start), dtype=DTYPE)
            feat = model.fake_feature(Tensor(z))
            hidden = model.reconstruct_hidden(feat)
            windows = model.decoder(hidden)
            out.append(windows.data.copy())
    result = np.concatenate(out, axis=0) if out else np.zeros(
        (0, cfg.window_length, cfg.n_features), dtype=DTYPE)
    if denormalized and checkpoint.norm_stats is not None:
        return denormalize(result.astype(np.float64), checkpoint.norm_stats)
    return result


@dataclass
class Checkpoint:
    config: TrainingConfig
    norm_stats: NormStats
    arrays: dict
    rng_state: dict
    noise_index: int
    phase_completed: int
    epoch_counters: dict
    format_version: int = CHECKPOINT_VERSION

    def save(self, path):
        names = list(self.arrays.keys())
        blocks = b""
        entries = []
        offset = 0
        for name in names:
            arr = np.ascontiguousarray(self.arrays[name], dtype=DTYPE)
            raw = arr.astype("<f4", copy=False).tobytes()
            entries.append({"name": name, "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(raw)})
            blocks += raw
            offset += len(raw)
        stats = None
        if self.norm_stats is not None:
            stats = {"minimum": self.norm_stats.minimum.tolist(),
                     "maximum": self.norm_stats.maximum.tolist(),
                     "feature_names": list(self.norm_stats.feature_names)}
        manifest = {
            "format_version": self.format_version,
            "config": asdict(self.config) | {"n_features": self.config.n_features},
            "norm_stats": stats,
            "rng_state": self.rng_state,
            "noise_index": self.noise_index,
            "phase_completed": self.phase_completed,
            "epoch_counters": self.epoch_counters,
            "params": entries,
            "blocks_sha256": hashlib.sha256(blocks).hexdigest(),
        }
        payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            fh.write(blocks)
        return path

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) < len(CHECKPOINT_MAGIC) + 8 or not data.startswith(CHECKPOINT_MAGIC):
            raise CorruptFile(f"{path}: not a checkpoint file")
        pos = len(CHECKPOINT_MAGIC)
        (manifest_len,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if len(data) < pos + manifest_len:
            raise CorruptFile(f"{path}: truncated manifest")
        try:
            manifest = json.loads(data[pos:pos + manifest_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"{path}: unreadable manifest") from exc
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise VersionMismatch(
                f"{path}: format {manifest.get('format_version')}, "
                f"expected {CHECKPOINT_VERSION}")
        blocks = data[pos + manifest_len:]
        if hashlib.sha256(blocks).hexdigest() != manifest["blocks_sha256"]:
            raise CorruptFile(f"{path}: parameter block checksum mismatch")
        arrays = {}
        for entry in manifest["params"]:
            lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
            if hi > len(blocks):
                raise CorruptFile(f"{path}: truncated parameter block {entry['name']}")
            arr = np.frombuffer(blocks[lo:hi], dtype="<f4").reshape(entry["shape"])
            arrays[entry["name"]] = arr.astype(DTYPE)
        cfg_dict = dict(manifest["config"])
        n_features = cfg_dict.pop("n_features", None)
        known = {f.name for f in fields(TrainingConfig)}
        cfg = TrainingConfig(**{k: v for k, v in cfg_dict.items() if k in known})
        cfg.n_features = n_features
        stats = None
        if manifest["norm_stats"] is not None:
            s = manifest["norm_stats"]
            stats = NormStats(np.asarray(s["minimum"], dtype=np.float64),
                              np.asarray(s["maximum"], dtype=np.float64),
                              list(s["feature_names"]))
        return cls(
            config=cfg,
            norm_stats=stats,
            arrays=arrays,
            rng_state=manifest["rng_state"],
            noise_index=manifest["noise_index"],
            phase_completed=manifest["phase_completed"],
            epoch_counters=manifest["epoch_counters"],
        )
