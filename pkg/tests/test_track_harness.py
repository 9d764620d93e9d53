from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from errors import ConfigError, ParameterError
from synth_world import SyntheticFrame, benchmark_suite, clean_scene, generate
from temporal_transformer import decode_self
from tensor_core import FeatureMap, embeddings_to_feature_map
from track_harness import (
    COLUNAS_ABLACAO,
    MODOS,
    PIPELINES,
    TrackerConfig,
    TransformerTracker,
    default_modes,
    load_tracker_config,
    run_ablation,
    run_memory_sweep,
    track,
)

BASELINE = Path(__file__).parent / "fixtures" / "ablation_baseline.csv"


def _escalar(quadros, fator):
    return [
        SyntheticFrame(FeatureMap(q.feature.data * fator), q.center, q.visible, q.radius)
        for q in quadros
    ]


class TestTrackerConfig:
    def test_default_modes_order(self):
        modos = default_modes()
        assert [(m.pipeline, m.transformer) for m in modos] == [
            (p, t) for p in PIPELINES for t in MODOS
        ]
        assert all(m.window == "none" for m in modos)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            TrackerConfig(transformer="decoder_only")

    def test_load_from_file(self, tmp_path):
        caminho = tmp_path / "t.cfg"
        caminho.write_text("pipeline = dcf\ninterval = 2\n")
        cfg = load_tracker_config(caminho, {"transformer": "off"})
        assert (cfg.pipeline, cfg.transformer, cfg.interval) == ("dcf", "off", 2)

    def test_unknown_key_in_file(self, tmp_path):
        caminho = tmp_path / "t.cfg"
        caminho.write_text("pipeline = dcf\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigError) as erro:
            load_tracker_config(caminho)
        assert erro.value.linha == 2


class TestTrack:
    @pytest.mark.parametrize("cfg", default_modes(), ids=lambda c: c.label)
    def test_clean_scene_is_tracked(self, clean_frames, cfg):
        resultado = track(clean_frames, cfg)
        assert resultado.ao > 0.99
        assert resultado.frames == len(clean_frames)

    def test_frame_zero_is_ground_truth(self, clean_frames):
        resultado = track(clean_frames, TrackerConfig())
        assert resultado.centers[0] == clean_frames[0].center
        assert resultado.overlaps[0] == 1.0

    @pytest.mark.parametrize("modo", ["encoder_only", "full"])
    def test_ensemble_counts(self, modo):
        quadros = generate(clean_scene(frames=101))
        resultado = track(quadros, TrackerConfig(transformer=modo))
        assert resultado.encoder_calls == 21
        assert resultado.stored_templates == 20

    def test_off_mode_does_not_encode(self):
        resultado = track(generate(clean_scene(frames=101)), TrackerConfig(transformer="off"))
        assert resultado.encoder_calls == 0
        assert resultado.stored_templates == 20

    def test_deterministic_replay(self):
        quadros = generate(benchmark_suite(1, frames=30)[0])
        for cfg in (TrackerConfig(), TrackerConfig(pipeline="dcf")):
            a, b = track(quadros, cfg), track(quadros, cfg)
            assert a.centers == b.centers
            np.testing.assert_array_equal(a.overlaps, b.overlaps)

    @pytest.mark.parametrize(
        "cfg",
        [TrackerConfig(transformer="off"), TrackerConfig(), TrackerConfig(pipeline="dcf")],
        ids=lambda c: c.label,
    )
    def test_feature_scale_invariance(self, cfg):
        quadros = generate(clean_scene(frames=30))
        base = track(quadros, cfg).centers
        assert track(_escalar(quadros, 10.0), cfg).centers == base

    def test_encoder_only_search_uses_shared_self_attention(self, clean_frames):
        rastreador = TransformerTracker(TrackerConfig(transformer="encoder_only"))
        rastreador.iniciar(clean_frames[0])
        busca = clean_frames[7].feature
        decodificada, mascara = rastreador._decodificar(busca)
        esperado = decode_self(busca, rastreador.transformer)
        esperado = embeddings_to_feature_map(esperado, 10, 10)
        np.testing.assert_array_equal(decodificada.data, esperado.data)
        assert mascara is None

    def test_without_weight_sharing(self, clean_frames):
        resultado = track(clean_frames, TrackerConfig(weight_sharing=False))
        assert resultado.ao > 0.99

    def test_single_frame_sequence(self, clean_frames):
        with pytest.raises(ParameterError):
            track(clean_frames[:1], TrackerConfig())

    def test_invisible_frames_score_zero(self):
        spec = clean_scene(frames=20).model_copy(update={"occlusions": ((10, 12),)})
        resultado = track(generate(spec), TrackerConfig())
        np.testing.assert_array_equal(resultado.overlaps[10:13], 0.0)

    def test_closed_gate_freezes_ensemble(self):
        quadros = generate(clean_scene(frames=30))
        cfg = TrackerConfig(confidence_gate=True, gate_threshold=1e9)
        resultado = track(quadros, cfg)
        assert resultado.stored_templates == 1
        assert resultado.encoder_calls == 1

    def test_pin_first_capacity(self):
        quadros = generate(clean_scene(frames=30))
        resultado = track(quadros, TrackerConfig(interval=1, max_size=3, pin_first=True))
        assert resultado.stored_templates == 3
        assert resultado.ao > 0.99

    def test_kept_maps(self):
        quadros = generate(clean_scene(frames=12))
        resultado = track(quadros, TrackerConfig(keep_responses=True, keep_masks=True))
        assert resultado.responses.shape == (12, 10, 10)
        assert resultado.masks.shape == (12, 10, 10)
        linha, coluna = quadros[0].center
        assert resultado.responses[0][linha, coluna] == resultado.responses[0].max()
        assert np.all(resultado.masks >= 0.0) and np.all(resultado.masks <= 1.0)

    def test_off_mode_has_no_propagated_mask(self):
        quadros = generate(clean_scene(frames=6))
        resultado = track(quadros, TrackerConfig(transformer="off", keep_masks=True))
        np.testing.assert_array_equal(resultado.masks[1:], 0.0)

    def test_result_table(self, clean_frames):
        tabela = track(clean_frames, TrackerConfig()).to_frame()
        assert list(tabela.columns) == ["frame", "row", "col", "iou"]
        assert len(tabela) == len(clean_frames)
        assert tabela["frame"].tolist() == list(range(len(clean_frames)))


class TestRunAblation:
    def test_clean_suite_table(self):
        tabela = run_ablation([clean_scene(frames=30)], default_modes())
        assert list(tabela.columns) == COLUNAS_ABLACAO
        assert list(zip(tabela["pipeline"], tabela["transformer"])) == [
            (p, t) for p in PIPELINES for t in MODOS
        ]
        assert (tabela["ao"] > 0.99).all()

    def test_row_order_is_fixed(self):
        modos = list(reversed(default_modes()))[:4]
        tabela = run_ablation([clean_scene(frames=10)], modos)
        assert tabela["transformer"].tolist() == ["encoder_only", "feature_only", "mask_only", "full"]
        assert (tabela["pipeline"] == "dcf").all()

    def test_empty_modes(self):
        with pytest.raises(ParameterError):
            run_ablation([clean_scene(frames=10)], [])

    def test_empty_suite(self):
        with pytest.raises(ParameterError):
            run_ablation([], default_modes())

    def test_threads_do_not_change_results(self):
        suite = benchmark_suite(2, frames=20)
        modos = default_modes()[:2]
        a = run_ablation(suite, modos, threads=1)
        b = run_ablation(suite, modos, threads=2)
        pd.testing.assert_frame_equal(a.drop(columns="fps"), b.drop(columns="fps"))


def test_memory_sweep_table():
    tabela = run_memory_sweep([clean_scene(frames=20)], intervals=(1, 5), sizes=(1, 3))
    assert list(tabela.columns) == ["interval", "max_size", "ao", "sr_050"]
    assert list(zip(tabela["interval"], tabela["max_size"])) == [(1, 1), (1, 3), (5, 1), (5, 3)]
    assert (tabela["ao"] > 0.99).all()


@pytest.fixture(scope="module")
def ablacao_benchmark():
    return run_ablation(benchmark_suite(), default_modes(), threads=4)


def _ao(tabela, pipeline, modo):
    linha = tabela[(tabela["pipeline"] == pipeline) & (tabela["transformer"] == modo)]
    return float(linha["ao"].iloc[0])


@pytest.mark.slow
def test_transformer_improves_benchmark(ablacao_benchmark):
    for pipeline, margem in (("siamese", 0.05), ("dcf", 0.02)):
        base = _ao(ablacao_benchmark, pipeline, "off")
        assert _ao(ablacao_benchmark, pipeline, "full") - base >= margem
        assert _ao(ablacao_benchmark, pipeline, "mask_only") > base
        assert _ao(ablacao_benchmark, pipeline, "feature_only") > base
        codificador = _ao(ablacao_benchmark, pipeline, "encoder_only")
        assert base <= codificador <= _ao(ablacao_benchmark, pipeline, "full")


@pytest.mark.slow
def test_matches_pinned_baseline(ablacao_benchmark):
    fixada = pd.read_csv(BASELINE)
    chaves = ["pipeline", "transformer"]
    juntas = fixada.merge(ablacao_benchmark, on=chaves, how="left", suffixes=("_fixado", ""))
    assert juntas["ao"].notna().all(), "configuração da linha de base ausente na ablação"
    for _, linha in juntas.iterrows():
        assert abs(linha["ao"] - linha["ao_fixado"]) <= 0.02, (linha["pipeline"], linha["transformer"])
