"""Generator cascade and checkpoint contracts."""

import json
import os
import struct

import numpy as np
import pytest

from bandstep.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    load_checkpoint,
    model_tensors,
    save_checkpoint,
)
from bandstep.dsp import SpectrumPair, StftConfig, Waveform, stft, to_log_amp_phase
from bandstep.errors import CheckpointError, InvalidArgumentError
from bandstep.model import (
    BlockConfig,
    BweBlock,
    CascadeConfig,
    CascadeModel,
    ConvNeXtV2Block,
    cascade_extend,
    extend_waveform,
)
from bandstep.nn import Tensor, grad_check
from bandstep.nn import functional as F

TINY_STFT = StftConfig(n_fft=16, win_len=12, hop=4)
TINY_BLOCK = BlockConfig(freq_bins=9, hidden=6, n_convnext=1, expansion=2,
                         dw_kernel=3, io_kernel=3)


def tiny_config(rates=(8000, 16000, 48000)):
    return CascadeConfig(rates=rates, stft=TINY_STFT, block=TINY_BLOCK)


def tiny_pair(seed=0, t_frames=7, effective=8000, rates=(8000, 16000, 48000)):
    r = np.random.default_rng(seed)
    return SpectrumPair(
        log_amp=r.standard_normal((t_frames, 9)),
        phase=r.uniform(-np.pi, np.pi, (t_frames, 9)),
        rate=rates[-1],
        effective_rate=effective,
        cfg=TINY_STFT,
        n_samples=12 + (t_frames - 1) * 4 - 2 * TINY_STFT.pad,
    )


# ---------------------------------------------------------------------------
# configuration invariants
# ---------------------------------------------------------------------------

class TestConfigs:

    def test_rates_must_ascend(self):
        with pytest.raises(InvalidArgumentError):
            tiny_config(rates=(8000, 8000, 48000))
        with pytest.raises(InvalidArgumentError):
            tiny_config(rates=(16000, 8000))

    def test_needs_at_least_one_stage(self):
        with pytest.raises(InvalidArgumentError):
            tiny_config(rates=(48000,))

    def test_bins_must_match_transform(self):
        with pytest.raises(InvalidArgumentError):
            CascadeConfig(rates=(8000, 48000), stft=TINY_STFT,
                          block=BlockConfig(freq_bins=10))

    def test_even_kernels_rejected(self):
        with pytest.raises(InvalidArgumentError):
            BlockConfig(freq_bins=9, dw_kernel=6)

    def test_stage_count(self):
        assert tiny_config().n_stages == 2
        assert tiny_config().container_rate == 48000


# ---------------------------------------------------------------------------
# network blocks
# ---------------------------------------------------------------------------

class TestConvNeXtBlock:

    def test_zero_parameters_give_identity(self):
        block = ConvNeXtV2Block(6, 2, 3, rng=np.random.default_rng(0))
        for p in block.parameters():
            p.data[:] = 0.0
        x = np.random.default_rng(1).standard_normal((2, 6, 5)).astype(np.float32)
        out = block(Tensor(x))
        np.testing.assert_array_equal(out.data, x)

    def test_shape_preserved(self):
        block = ConvNeXtV2Block(6, 3, 7, rng=np.random.default_rng(2))
        x = Tensor(np.zeros((3, 6, 11), dtype=np.float32))
        assert block(x).shape == (3, 6, 11)

    def test_gradients_match_finite_differences(self):
        block = ConvNeXtV2Block(4, 2, 3, rng=np.random.default_rng(3),
                                dtype=np.float64)
        x = np.random.default_rng(4).standard_normal((1, 4, 5))
        params = block.parameters()

        def fn(xt, *_):
            return block(xt)

        err = grad_check(fn, [Tensor(x, requires_grad=True), *params])
        assert err <= 1e-4


class TestBweBlock:

    def test_zeroed_amp_head_is_residual_identity(self):
        block = BweBlock(TINY_BLOCK, rng=np.random.default_rng(5))
        block.amp.heads[0].weight.data[:] = 0.0
        block.amp.heads[0].bias.data[:] = 0.0
        r = np.random.default_rng(6)
        la = Tensor(r.standard_normal((2, 9, 7)).astype(np.float32))
        ph = Tensor(r.uniform(-np.pi, np.pi, (2, 9, 7)).astype(np.float32))
        la_out, _ = block(la, ph)
        np.testing.assert_array_equal(la_out.data, la.data)

    def test_phase_output_is_principal(self):
        block = BweBlock(TINY_BLOCK, rng=np.random.default_rng(7))
        r = np.random.default_rng(8)
        la = Tensor(r.standard_normal((2, 9, 7)).astype(np.float32))
        ph = Tensor(r.uniform(-np.pi, np.pi, (2, 9, 7)).astype(np.float32))
        _, ph_out = block(la, ph)
        assert np.all(ph_out.data > -np.pi) and np.all(ph_out.data <= np.pi)

    def test_gradient_reaches_every_parameter(self):
        block = BweBlock(TINY_BLOCK, rng=np.random.default_rng(9))
        r = np.random.default_rng(10)
        la = Tensor(r.standard_normal((2, 9, 7)).astype(np.float32))
        ph = Tensor(r.uniform(-np.pi, np.pi, (2, 9, 7)).astype(np.float32))
        la_out, ph_out = block(la, ph)
        loss = F.add((la_out * la_out).mean(), (ph_out * ph_out).mean())
        loss.backward()
        dead = [name for name, p in block.named_parameters().items()
                if p.grad is None or not np.any(p.grad)]
        assert dead == []

    def test_tiny_block_end_to_end_gradcheck(self):
        cfg = BlockConfig(freq_bins=3, hidden=4, n_convnext=1, expansion=2,
                          dw_kernel=3, io_kernel=3)
        block = BweBlock(cfg, rng=np.random.default_rng(11), dtype=np.float64)
        # move the probe point away from the atan2 origin (finite differences
        # need bounded curvature, not just differentiability)
        for p in block.parameters():
            p.data *= 25.0
        r = np.random.default_rng(12)
        la = Tensor(r.standard_normal((1, 3, 4)), requires_grad=True)
        ph = Tensor(r.uniform(-1.5, 1.5, (1, 3, 4)), requires_grad=True)
        probes = [block.amp.proj.weight, block.phase.heads[0].weight,
                  block.amp.stack[0].grn.gamma, block.phase.norm_out.beta]

        def fn(la_t, ph_t, *_):
            la_out, ph_out = block(la_t, ph_t)
            return F.concat([la_out, ph_out], axis=1)

        assert grad_check(fn, [la, ph, *probes]) <= 1e-4

    def test_bin_count_mismatch_rejected(self):
        block = BweBlock(TINY_BLOCK, rng=np.random.default_rng(13))
        la = Tensor(np.zeros((1, 8, 7), dtype=np.float32))
        with pytest.raises(InvalidArgumentError):
            block(la, la)


# ---------------------------------------------------------------------------
# cascade routing
# ---------------------------------------------------------------------------

class TestCascadeExtend:

    def test_single_hop_equals_block_forward(self):
        model = CascadeModel(tiny_config(), seed=14)
        pair = tiny_pair(seed=15)
        out = cascade_extend(model, pair, 0, 1)
        la = Tensor(np.ascontiguousarray(pair.log_amp.T[None], dtype=np.float32))
        ph = Tensor(np.ascontiguousarray(pair.phase.T[None], dtype=np.float32))
        la2, ph2 = model.blocks[0](la, ph)
        np.testing.assert_array_equal(out.log_amp, la2.data[0].T)
        np.testing.assert_array_equal(out.phase, ph2.data[0].T)
        assert out.effective_rate == 16000

    def test_published_ladder_runs_four_blocks(self):
        stft_cfg = StftConfig(n_fft=16, win_len=12, hop=4)
        config = CascadeConfig(
            rates=(8000, 12000, 16000, 24000, 48000), stft=stft_cfg,
            block=BlockConfig(freq_bins=9, hidden=4, n_convnext=1, expansion=2,
                              dw_kernel=3))
        model = CascadeModel(config, seed=16)
        pair = tiny_pair(seed=17, rates=config.rates)
        cascade_extend(model, pair, 0, config.n_stages)
        assert model.block_calls == 4

    def test_composition_is_bitwise(self):
        model = CascadeModel(tiny_config(), seed=18)
        pair = tiny_pair(seed=19)
        direct = cascade_extend(model, pair, 0, 2)
        composed = cascade_extend(model, cascade_extend(model, pair, 0, 1), 1, 2)
        np.testing.assert_array_equal(direct.log_amp, composed.log_amp)
        np.testing.assert_array_equal(direct.phase, composed.phase)

    def test_stage_bounds_and_band_checks(self):
        model = CascadeModel(tiny_config(), seed=20)
        pair = tiny_pair(seed=21)
        with pytest.raises(InvalidArgumentError):
            cascade_extend(model, pair, 1, 1)
        with pytest.raises(InvalidArgumentError):
            cascade_extend(model, pair, 0, 3)
        with pytest.raises(InvalidArgumentError):
            cascade_extend(model, tiny_pair(seed=22, effective=16000), 0, 2)


# ---------------------------------------------------------------------------
# waveform-level inference
# ---------------------------------------------------------------------------

class TestExtendWaveform:

    def test_zero_model_maps_silence_to_silence(self):
        model = CascadeModel(tiny_config(), seed=23)
        for p in model.parameters():
            p.data[:] = 0.0
        out = extend_waveform(model, Waveform(np.zeros(8000), 8000), 8000, 48000)
        assert out.rate == 48000
        assert np.max(np.abs(out.samples)) <= 1e-6

    def test_duration_contract(self):
        model = CascadeModel(tiny_config(), seed=24)
        wav = Waveform(np.random.default_rng(25).standard_normal(8000) * 0.1, 8000)
        out = extend_waveform(model, wav, 8000, 48000)
        assert abs(out.samples.size - 48000) <= 80
        mid = extend_waveform(model, wav, 8000, 16000)
        assert mid.rate == 16000 and abs(mid.samples.size - 16000) <= 80

    def test_inference_is_deterministic(self):
        model = CascadeModel(tiny_config(), seed=26)
        wav = Waveform(np.random.default_rng(27).standard_normal(4000) * 0.1, 8000)
        a = extend_waveform(model, wav, 8000, 48000)
        b = extend_waveform(model, wav, 8000, 48000)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_rate_validation(self):
        model = CascadeModel(tiny_config(), seed=28)
        wav = Waveform(np.zeros(4000), 8000)
        with pytest.raises(InvalidArgumentError):
            extend_waveform(model, wav, 8000, 44100)
        with pytest.raises(InvalidArgumentError):
            extend_waveform(model, wav, 48000, 8000)
        with pytest.raises(InvalidArgumentError):
            extend_waveform(model, Waveform(np.zeros(4000), 16000), 8000, 48000)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

class TestCheckpoint:

    def test_round_trip_is_bitwise(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=29)
        extras = {"opt.m.blocks.0": np.random.default_rng(30)
                  .standard_normal(7).astype(np.float32)}
        state = {**model.state(), **extras}
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, model.config, state, step=123)
        ckpt = load_checkpoint(path)
        assert ckpt.step == 123 and ckpt.version == FORMAT_VERSION
        assert ckpt.config == model.config
        assert set(ckpt.tensors) == set(state)
        for name, arr in state.items():
            np.testing.assert_array_equal(ckpt.tensors[name], arr)
        assert "opt.m.blocks.0" not in model_tensors(ckpt)

    def test_saving_twice_yields_identical_bytes(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=31)
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        save_checkpoint(a, model.config, model.state(), step=7)
        save_checkpoint(b, model.config, model.state(), step=7)
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_loaded_state_restores_model(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=32)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, model.config, model.state(), step=1)
        other = CascadeModel(tiny_config(), seed=99)
        other.load_state(model_tensors(load_checkpoint(path)))
        for (na, pa), (nb, pb) in zip(sorted(model.named_parameters().items()),
                                      sorted(other.named_parameters().items())):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_truncation_detected(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=33)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, model.config, model.state(), step=0)
        blob = open(path, "rb").read()
        for cut in (3, 40, len(blob) - 10):
            clipped = str(tmp_path / f"cut{cut}.ckpt")
            open(clipped, "wb").write(blob[:cut])
            with pytest.raises(CheckpointError):
                load_checkpoint(clipped)

    def test_bad_magic_and_version(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=34)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, model.config, model.state(), step=0)
        blob = bytearray(open(path, "rb").read())
        wrong = str(tmp_path / "magic.ckpt")
        open(wrong, "wb").write(b"NOPE" + bytes(blob[4:]))
        with pytest.raises(CheckpointError):
            load_checkpoint(wrong)
        bumped = bytearray(blob)
        bumped[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
        versioned = str(tmp_path / "ver.ckpt")
        open(versioned, "wb").write(bytes(bumped))
        with pytest.raises(CheckpointError):
            load_checkpoint(versioned)

    def test_ladder_mismatch_rejected(self, tmp_path):
        narrow = CascadeModel(tiny_config(rates=(8000, 16000)), seed=35)
        path = str(tmp_path / "narrow.ckpt")
        save_checkpoint(path, narrow.config, narrow.state(), step=0)
        with pytest.raises(CheckpointError, match="config mismatch"):
            load_checkpoint(path, expected_config=tiny_config(rates=(8000, 12000, 16000)))

    def test_manifest_byte_length_checked(self, tmp_path):
        header = json.dumps({
            "config": {
                "rates": [8000, 48000],
                "stft": {"n_fft": 16, "win_len": 12, "hop": 4},
                "block": {"freq_bins": 9, "hidden": 4, "n_convnext": 1,
                          "expansion": 2, "dw_kernel": 3, "io_kernel": 3},
            },
            "step": 0,
            "tensors": [{"name": "w", "shape": [4], "dtype": "float32",
                         "offset": 0, "nbytes": 12}],
        }).encode()
        path = str(tmp_path / "bad.ckpt")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIQ", MAGIC, FORMAT_VERSION, len(header)))
            fh.write(header)
            fh.write(b"\x00" * 16)
        with pytest.raises(CheckpointError, match="declares 12 bytes"):
            load_checkpoint(path)

    def test_save_is_atomic_on_failure(self, tmp_path):
        model = CascadeModel(tiny_config(), seed=36)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, model.config, model.state(), step=5)
        good = open(path, "rb").read()
        with pytest.raises(InvalidArgumentError):
            save_checkpoint(path, model.config, model.state(), step=-1)
        assert open(path, "rb").read() == good
        assert [f for f in os.listdir(tmp_path) if f.endswith(".tmp")] == []
