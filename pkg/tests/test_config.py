"""Tests for run configuration: defaults, validation, YAML round trips,
the desk preset, and the bridges into runtime types."""

import pytest
import yaml

from bandstep.config import (
    RunConfig,
    config_from_dict,
    desk_preset,
    dump_run_config,
    load_run_config,
)
from bandstep.errors import DataError, InvalidArgumentError


class TestDefaults:
    def test_optimizer_defaults(self):
        opt = RunConfig().optimizer
        assert opt.lr0 == 2e-4
        assert opt.beta1 == 0.8
        assert opt.beta2 == 0.99
        assert opt.weight_decay == 0.01
        assert opt.lr_decay_per_epoch == 0.999
        assert opt.batch_size == 16
        assert opt.clip_len == 8000

    def test_teacher_forcing_defaults(self):
        tf = RunConfig().teacher_forcing
        assert tf.initial_ratio == 0.75
        assert tf.decay == 0.999995

    def test_cascade_and_stft_defaults(self):
        cfg = RunConfig()
        assert cfg.cascade.rates == [8000, 12000, 16000, 24000, 48000]
        assert cfg.cascade.hidden == 512
        assert cfg.stft.n_fft == 1024
        assert cfg.stft.win_len == 320
        assert cfg.stft.hop == 80

    def test_loss_weight_defaults(self):
        w = RunConfig().loss
        assert (w.w_amp, w.w_phase, w.w_complex, w.w_adv) == (45.0, 100.0, 22.5, 1.0)

    def test_train_defaults(self):
        t = RunConfig().train
        assert t.steps == 500_000
        assert t.seed == 0
        assert t.deterministic is False
        assert t.checkpoint_interval == 0
        assert t.log_every == 50

    def test_corpus_defaults(self):
        c = RunConfig().corpus
        assert c.source == "synthetic"
        assert c.split_ratio == 0.9
        assert c.synthetic.n_clips == 64


class TestValidation:
    def test_unknown_top_level_key_named(self):
        with pytest.raises(InvalidArgumentError, match="learning_rate"):
            config_from_dict({"learning_rate": 1e-3})

    def test_unknown_nested_key_named(self):
        with pytest.raises(InvalidArgumentError, match="optimizer.momentum"):
            config_from_dict({"optimizer": {"momentum": 0.9}})

    def test_wrong_type_reports_location(self):
        with pytest.raises(InvalidArgumentError, match="optimizer.lr0"):
            config_from_dict({"optimizer": {"lr0": "fast"}})

    def test_wav_dir_source_requires_path(self):
        with pytest.raises(InvalidArgumentError, match="corpus.wav_dir is unset"):
            config_from_dict({"corpus": {"source": "wav_dir"}})

    def test_unknown_corpus_source_rejected(self):
        with pytest.raises(InvalidArgumentError, match="corpus.source"):
            config_from_dict({"corpus": {"source": "tape"}})

    def test_partial_override_keeps_other_defaults(self):
        cfg = config_from_dict({"optimizer": {"batch_size": 4}})
        assert cfg.optimizer.batch_size == 4
        assert cfg.optimizer.lr0 == 2e-4
        assert cfg.cascade.hidden == 512


class TestYamlRoundTrip:
    def test_dump_then_parse_preserves_everything(self):
        cfg = desk_preset()
        cfg.train.seed = 123
        cfg.loss.w_adv = 0.0
        again = config_from_dict(yaml.safe_load(dump_run_config(cfg)))
        assert again == cfg

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(dump_run_config(desk_preset()), encoding="utf-8")
        assert load_run_config(str(path)) == desk_preset()

    def test_empty_file_is_all_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        assert load_run_config(str(path)) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read config"):
            load_run_config(str(tmp_path / "none.yaml"))

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("optimizer: [unclosed", encoding="utf-8")
        with pytest.raises(DataError, match="not valid YAML"):
            load_run_config(str(path))

    def test_non_mapping_document(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(DataError, match="must hold a mapping, got list"):
            load_run_config(str(path))


class TestDeskPreset:
    def test_shrinks_model_and_run_length(self):
        cfg = desk_preset()
        assert cfg.cascade.rates == [8000, 16000, 48000]
        assert cfg.cascade.hidden == 64
        assert cfg.optimizer.batch_size == 8
        assert cfg.train.steps == 500
        # one training clip (8000 samples at the container rate) per corpus clip
        assert cfg.corpus.synthetic.duration == pytest.approx(8000 / 48000)

    def test_keeps_published_optimizer_settings(self):
        cfg = desk_preset()
        assert cfg.optimizer.lr0 == 2e-4
        assert cfg.teacher_forcing.initial_ratio == 0.75
        assert cfg.loss.w_amp == 45.0


class TestRuntimeBridges:
    def test_cascade_config_mirrors_sections(self):
        cc = desk_preset().cascade_config()
        assert cc.rates == (8000, 16000, 48000)
        assert cc.n_stages == 2
        assert cc.container_rate == 48000
        assert cc.stft.n_fft == 1024
        assert cc.block.hidden == 64
        assert cc.block.freq_bins == 1024 // 2 + 1

    def test_optimizer_and_loss_bridges(self):
        cfg = RunConfig()
        oc = cfg.optimizer_config()
        assert (oc.lr0, oc.beta1, oc.beta2) == (2e-4, 0.8, 0.99)
        assert oc.weight_decay == 0.01
        lw = cfg.loss_weights()
        assert (lw.w_amp, lw.w_phase, lw.w_complex, lw.w_adv) == (45.0, 100.0, 22.5, 1.0)

    def test_tf_schedule_bridge(self):
        sched = RunConfig().tf_schedule()
        assert sched.ratio_at(0) == 0.75
        assert sched.decay == 0.999995
