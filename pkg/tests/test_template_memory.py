import numpy as np
import pytest

from errors import DimensionError, ParameterError
from template_memory import ConfidenceGate, TemplateEnsemble
from tensor_core import FeatureMap, MaskVector


def _template(valor, c=2, h=3, w=3):
    return FeatureMap(np.full((c, h, w), float(valor)))


def _mascara(n=9):
    return MaskVector(np.full(n, 0.5))


def _simular(conjunto, quadros):
    atualizacoes = 0
    for t in quadros:
        conjunto, atualizado = conjunto.maybe_update(_template(t), _mascara(), t)
        atualizacoes += atualizado
    return conjunto, atualizacoes


class TestInit:
    def test_single_template(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara())
        assert len(conjunto) == 1
        assert (conjunto.max_size, conjunto.interval) == (20, 5)

    @pytest.mark.parametrize("max_size, interval", [(0, 5), (20, 0)])
    def test_zero_sizes(self, max_size, interval):
        with pytest.raises(ParameterError):
            TemplateEnsemble.init(_template(0), _mascara(), max_size, interval)

    def test_mask_length_must_match(self):
        with pytest.raises(DimensionError):
            TemplateEnsemble.init(_template(0), _mascara(8))


class TestMaybeUpdate:
    def test_hundred_frames(self):
        conjunto, atualizacoes = _simular(TemplateEnsemble.init(_template(0), _mascara()), range(1, 101))
        assert atualizacoes == 20
        assert len(conjunto) == 20
        assert conjunto.update_count == 20
        # o template inicial foi descartado; o mais antigo agora é o do quadro 5
        assert conjunto.templates[0].data[0, 0, 0] == 5.0
        assert conjunto.templates[-1].data[0, 0, 0] == 100.0

    def test_update_count_matches_interval(self):
        for intervalo in (1, 3, 7):
            conjunto = TemplateEnsemble.init(_template(0), _mascara(), max_size=50, interval=intervalo)
            _, atualizacoes = _simular(conjunto, range(1, 41))
            assert atualizacoes == 40 // intervalo

    def test_off_interval_frame(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara())
        novo, atualizado = conjunto.maybe_update(_template(3), _mascara(), 3)
        assert not atualizado
        assert len(novo) == 1
        assert novo.frames_since_update == 1

    def test_frame_zero_never_updates(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara(), interval=1)
        _, atualizado = conjunto.maybe_update(_template(1), _mascara(), 0)
        assert not atualizado

    def test_capacity_one(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara(), max_size=1)
        conjunto, atualizado = conjunto.maybe_update(_template(5), _mascara(), 5)
        assert atualizado
        assert len(conjunto) == 1
        assert conjunto.templates[0].data[0, 0, 0] == 5.0

    def test_pin_first_keeps_initial_template(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara(), max_size=3, interval=1, pin_first=True)
        conjunto, _ = _simular(conjunto, range(1, 6))
        assert [t.data[0, 0, 0] for t in conjunto.templates] == [0.0, 4.0, 5.0]

    def test_shape_mismatch(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara())
        with pytest.raises(DimensionError):
            conjunto.maybe_update(_template(1, h=4), _mascara(12), 5)

    def test_original_is_untouched(self):
        conjunto = TemplateEnsemble.init(_template(0), _mascara())
        conjunto.maybe_update(_template(5), _mascara(), 5)
        assert len(conjunto) == 1

    def test_replay_determinism(self):
        a, _ = _simular(TemplateEnsemble.init(_template(0), _mascara()), range(1, 60))
        b, _ = _simular(TemplateEnsemble.init(_template(0), _mascara()), range(1, 60))
        assert [t.data[0, 0, 0] for t in a.templates] == [t.data[0, 0, 0] for t in b.templates]

    def test_mask_ensemble_order(self):
        conjunto = TemplateEnsemble.init(_template(0), MaskVector(np.zeros(9)), interval=1)
        conjunto, _ = conjunto.maybe_update(_template(1), MaskVector(np.ones(9)), 1)
        np.testing.assert_array_equal(conjunto.mask_ensemble().data, np.r_[np.zeros(9), np.ones(9)])


class TestConfidenceGate:
    def test_disabled_always_allows(self):
        gate = ConfidenceGate()
        assert all(gate.permite(p) for p in (1.0, 0.0, 1e-9))

    def test_blocks_low_peak(self):
        gate = ConfidenceGate(enabled=True, threshold=0.25)
        assert gate.permite(1.0)
        assert gate.permite(0.9)
        assert not gate.permite(0.1)

    def test_threshold_follows_running_mean(self):
        gate = ConfidenceGate(enabled=True, threshold=0.5)
        for pico in (2.0, 4.0, 6.0):
            assert gate.permite(pico)
        assert gate.media == pytest.approx(4.0)
        assert not gate.permite(1.9)
        assert gate.permite(2.0)

    def test_state_does_not_grow(self):
        gate = ConfidenceGate(enabled=True)
        for t in range(10_000):
            gate.permite(1.0 + (t % 3))
        assert gate.contagem == 10_000
        assert gate.media == pytest.approx(sum(1.0 + (t % 3) for t in range(10_000)) / 10_000)
