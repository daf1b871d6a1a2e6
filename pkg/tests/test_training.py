import numpy as np
import pytest
import torch

from semvid.errors import ConfigError, DivergenceError
from semvid.pipeline import TransceiverConfig, build_transceiver, plan_from_channels, transmit_gop
from semvid.training import (
    Checkpoint,
    TrainConfig,
    draw_step_snr,
    gop_loss,
    learning_rate_at,
    load_checkpoint,
    reconstruction_loss,
    save_checkpoint,
    train_run,
    train_step,
)
from semvid.videoio import VideoGoP, synthesize_moving_shapes

DIMS = (16, 16)


def small_model(seed=0, i_channels=4, p_channels=4):
    cfg = TransceiverConfig(
        i_channels=i_channels,
        p_channels=p_channels,
        codec_width=8,
        coder_width=8,
        offset_channels=4,
        seed=seed,
    )
    return build_transceiver(cfg)


def small_setup(n_gops=4, gop_size=3, seed=0):
    data = synthesize_moving_shapes(seed=seed, n_gops=n_gops, gop_size=gop_size, dims=DIMS)
    model = small_model()
    plan = plan_from_channels(4, 4, DIMS, gop_size)
    config = TrainConfig(steps=10, gop_size=gop_size, seed=1, checkpoint_every=5)
    return data, model, plan, config


class TestReconstructionLoss:
    def test_identical_is_zero(self):
        g = synthesize_moving_shapes(seed=0, n_gops=1, gop_size=3, dims=DIMS).gops[0]
        assert reconstruction_loss([g], [VideoGoP(g.frames.copy())]) == 0.0

    def test_constant_offset(self):
        a = VideoGoP(np.full((2, 8, 8, 3), 0.5, dtype=np.float32))
        b = VideoGoP(np.full((2, 8, 8, 3), 0.6, dtype=np.float32))
        assert reconstruction_loss([a], [b]) == pytest.approx(0.01, rel=1e-5)

    def test_duplicating_gops_keeps_mean(self):
        rng = np.random.default_rng(0)
        a = VideoGoP(rng.uniform(size=(2, 8, 8, 3)).astype(np.float32))
        b = VideoGoP(rng.uniform(size=(2, 8, 8, 3)).astype(np.float32))
        once = reconstruction_loss([a], [b])
        twice = reconstruction_loss([a, a], [b, b])
        assert twice == pytest.approx(once, rel=1e-12)

    def test_torch_path_keeps_graph(self):
        x = torch.rand(2, 3, 8, 8, requires_grad=True)
        y = torch.rand(2, 3, 8, 8)
        loss = reconstruction_loss(x, y)
        loss.backward()
        assert x.grad is not None

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            reconstruction_loss(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 8, 4))


class TestLearningRate:
    def test_starts_at_lr_start(self):
        config = TrainConfig(steps=2000)
        assert learning_rate_at(0, config) == 1e-4

    def test_final_step_hits_lr_end(self):
        config = TrainConfig(steps=2000)
        assert learning_rate_at(config.steps - 1, config) == 2e-5

    def test_monotone_nonincreasing(self):
        config = TrainConfig(steps=100)
        lrs = [learning_rate_at(s, config) for s in range(100)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert lrs[0] == 1e-4 and lrs[-1] == 2e-5

    def test_constant_when_equal(self):
        config = TrainConfig(steps=10, lr_start=1e-3, lr_end=1e-3)
        assert learning_rate_at(9, config) == 1e-3


class TestTrainStep:
    def test_snr_within_range(self):
        config = TrainConfig(steps=50, snr_range_db=(2.0, 9.0))
        for s in range(50):
            assert 2.0 <= draw_step_snr(config, s) <= 9.0

    def test_loss_matches_manual_transmission(self):
        data, model, plan, config = small_setup()
        optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
        gop = data.gops[0]
        snr = draw_step_snr(config, 0)
        expected = float(
            gop_loss(model, gop, plan, snr, channel_seed=_first_seed(config, 0)).detach()
        )
        loss, snr_used = train_step(model, [gop], config, 0, optimizer, plan)
        assert snr_used == snr
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_deterministic_trajectories(self):
        losses = []
        for _ in range(2):
            data, model, plan, config = small_setup()
            optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
            run = [
                train_step(model, [data.gops[s % data.n]], config, s, optimizer, plan)[0]
                for s in range(5)
            ]
            losses.append(run)
        assert losses[0] == losses[1]

    def test_divergence_error_names_step(self):
        data, model, plan, config = small_setup()
        optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
        with torch.no_grad():
            model.codec.encoder.head.weight.fill_(float("nan"))
        with pytest.raises(DivergenceError) as exc:
            train_step(model, [data.gops[0]], config, 3, optimizer, plan)
        assert exc.value.step == 3

    def test_every_parameter_gets_gradient_within_a_few_steps(self):
        data, model, plan, config = small_setup()
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
        seen = {name: 0.0 for name, _ in model.named_parameters()}
        for s in range(6):
            train_step(model, [data.gops[s % data.n]], config, s, optimizer, plan)
            for name, p in model.named_parameters():
                if p.grad is not None:
                    seen[name] = max(seen[name], float(p.grad.abs().max()))
        dead = [name for name, g in seen.items() if g == 0.0]
        assert not dead, f"parameters without gradient: {dead}"

    def test_overfit_single_gop(self):
        # loss after 100 steps on one fixed GoP falls below half the initial loss
        data = synthesize_moving_shapes(seed=3, n_gops=1, gop_size=3, dims=DIMS)
        model = small_model(seed=1)
        plan = plan_from_channels(4, 4, DIMS, 3)
        config = TrainConfig(
            steps=100, gop_size=3, seed=2, snr_range_db=(10.0, 10.0), checkpoint_every=100
        )
        optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
        losses = [
            train_step(model, [data.gops[0]], config, s, optimizer, plan)[0]
            for s in range(config.steps)
        ]
        assert losses[-1] < 0.5 * losses[0]


def _first_seed(config, step_index):
    rng = np.random.default_rng([config.seed, step_index, 7])
    return int(rng.integers(0, 2**62, size=1)[0])


class TestTrainRun:
    def test_checkpoints_and_log_written(self, tmp_path):
        data, model, plan, config = small_setup()
        ck = train_run(data, config, model, plan, str(tmp_path))
        assert ck.step == config.steps
        assert (tmp_path / "checkpoint_step5.pt").exists()
        assert (tmp_path / "checkpoint_step10.pt").exists()
        assert (tmp_path / "checkpoint_latest.pt").exists()
        log = (tmp_path / "train_log.csv").read_text().strip().split("\n")
        assert log[0] == "step,lr,snr_db,loss"
        assert len(log) == 1 + config.steps

    def test_resume_matches_uninterrupted_bitwise(self, tmp_path):
        # interrupt-and-resume: restart from the run's own mid-way snapshot
        # and require the remaining loss trajectory to match exactly
        data, model, plan, config = small_setup()
        full = train_run(data, config, model, plan, str(tmp_path / "full"))

        model_resumed = small_model(seed=9)  # state is overwritten by the checkpoint
        resumed = train_run(
            data,
            config,
            model_resumed,
            plan,
            str(tmp_path / "resumed"),
            resume_from=str(tmp_path / "full" / "checkpoint_step5.pt"),
        )
        assert resumed.loss_log == full.loss_log

    def test_loaded_checkpoint_reproduces_forward(self, tmp_path):
        data, model, plan, config = small_setup()
        ck = train_run(data, config, model, plan, str(tmp_path))
        loaded = load_checkpoint(str(tmp_path / "checkpoint_latest.pt"))
        model_b = loaded.build_model()
        gop = data.gops[0]
        a = transmit_gop(gop, model, plan, 10.0, seed=11)
        b = transmit_gop(gop, model_b, loaded.build_plan(), 10.0, seed=11)
        torch.testing.assert_close(a.raw_frames, b.raw_frames, rtol=0, atol=0)

    def test_gop_size_mismatch_rejected(self, tmp_path):
        data, model, plan, config = small_setup(gop_size=3)
        bad = TrainConfig(steps=2, gop_size=5)
        with pytest.raises(ConfigError):
            train_run(data, bad, model, plan, str(tmp_path))

    def test_checkpoint_roundtrip(self, tmp_path):
        data, model, plan, config = small_setup()
        ck = Checkpoint(
            transceiver_config=model.config.to_dict(),
            train_config=config.__dict__ | {"snr_range_db": list(config.snr_range_db)},
            plan=plan.to_dict(),
            step=0,
            model_state=model.state_dict(),
            optimizer_state={},
            loss_log=[[0, 1e-4, 5.0, 0.5]],
        )
        path = save_checkpoint(ck, str(tmp_path / "ck.pt"))
        loaded = load_checkpoint(path)
        assert loaded.step == 0
        assert loaded.plan["L"] == plan.L
        assert loaded.build_train_config().gop_size == config.gop_size
        for k, v in model.state_dict().items():
            torch.testing.assert_close(loaded.model_state[k], v, rtol=0, atol=0)


class TestConfigValidation:
    def test_bad_lr_order(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_start=1e-5, lr_end=1e-4)

    def test_bad_snr_range(self):
        with pytest.raises(ConfigError):
            TrainConfig(snr_range_db=(10.0, 0.0))
