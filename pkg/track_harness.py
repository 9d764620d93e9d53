"""
Laço de rastreamento online sobre sequências sintéticas, métricas por
sequência e os executores de ablação e de varredura da memória de templates.
"""

import logging
import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from attention_blocks import TAU_PADRAO
from config_file import carregar_modelo
from errors import ParameterError
from metrics import MetricsCalculator, iou
from synth_world import SceneSpec, SyntheticFrame, generate
from template_memory import ConfidenceGate, TemplateEnsemble
from temporal_transformer import EncodedTemplates, TransformerConfig, decode, encode
from tensor_core import (
    EPS_PADRAO,
    FeatureMap,
    MaskVector,
    embeddings_to_feature_map,
    instance_normalize,
    reshape_to_embeddings,
)
from tracking_models import (
    Box,
    CorrelationKernel,
    ResponseMap,
    apply_window,
    box_from_center,
    crop_target_kernel,
    cross_correlate,
    gaussian_label,
    localize,
    normalized_center,
    solve_dcf,
)

logger = logging.getLogger(__name__)

PIPELINES = ("siamese", "dcf")
MODOS = ("off", "encoder_only", "feature_only", "mask_only", "full")

# modo -> (usa codificador, ramos do decodificador (máscara, característica) ou None).
# encoder_only passa a busca pela mesma auto-atenção dos templates, sem atenção cruzada.
_COMPONENTES: Dict[str, Tuple[bool, Optional[Tuple[bool, bool]]]] = {
    "off": (False, None),
    "encoder_only": (True, (False, False)),
    "feature_only": (True, (False, True)),
    "mask_only": (True, (True, False)),
    "full": (True, (True, True)),
}

COLUNAS_ABLACAO = [
    "pipeline",
    "transformer",
    "ao",
    "sr_050",
    "sr_075",
    "auc",
    "encoder_calls",
    "fps",
]


class TrackerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pipeline: Literal["siamese", "dcf"] = "siamese"
    transformer: Literal["off", "encoder_only", "mask_only", "feature_only", "full"] = "full"
    window: Literal["none", "hann"] = "none"
    window_weight: float = Field(default=0.2, ge=0.0, le=1.0)
    interval: int = Field(default=5, ge=1)
    max_size: int = Field(default=20, ge=1)
    dcf_lambda: float = Field(default=1e-2, ge=0.0)
    kernel_size: int = Field(default=3, ge=1)
    sigma_label: float = Field(default=0.1, gt=0.0)
    sigma_mask: float = Field(default=0.1, gt=0.0)
    tau: float = Field(default=TAU_PADRAO, gt=0.0)
    eps: float = Field(default=EPS_PADRAO, gt=0.0)
    projection: Literal["orthonormal", "uniform"] = "orthonormal"
    projection_seed: int = Field(default=0, ge=0)
    shared_weights: Optional[str] = None
    cross_weights: Optional[str] = None
    weight_sharing: bool = True
    pin_first: bool = False
    oracle_masks: bool = False
    confidence_gate: bool = False
    gate_threshold: float = Field(default=0.25, ge=0.0)
    keep_responses: bool = False
    keep_masks: bool = False

    @property
    def label(self) -> str:
        return f"{self.pipeline}/{self.transformer}"


def load_tracker_config(caminho: Union[str, Path], sobrescritas: Optional[Dict] = None) -> TrackerConfig:
    return carregar_modelo(TrackerConfig, caminho, sobrescritas)


def default_modes(**campos) -> List[TrackerConfig]:
    """As 10 configurações (pipeline × modo) na ordem fixa da tabela de ablação."""
    return [
        TrackerConfig(pipeline=pipeline, transformer=modo, **campos)
        for pipeline in PIPELINES
        for modo in MODOS
    ]


@dataclass(frozen=True, eq=False)
class TrackResult:
    centers: List[Tuple[int, int]]
    boxes: List[Box]
    overlaps: np.ndarray
    ao: float
    sr_050: float
    sr_075: float
    auc: float
    encoder_calls: int
    stored_templates: int
    wall_time: float
    responses: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None

    @property
    def frames(self) -> int:
        return len(self.centers)

    @property
    def fps(self) -> float:
        return self.frames / self.wall_time if self.wall_time > 0 else math.inf

    def to_frame(self) -> pd.DataFrame:
        """Tabela por quadro com colunas frame,row,col,iou."""
        return pd.DataFrame(
            [(t, c[0], c[1], float(o)) for t, (c, o) in enumerate(zip(self.centers, self.overlaps))],
            columns=["frame", "row", "col", "iou"],
        )

    def summary(self) -> Dict[str, float]:
        return {
            "frames": self.frames,
            "ao": self.ao,
            "sr_050": self.sr_050,
            "sr_075": self.sr_075,
            "auc": self.auc,
            "encoder_calls": self.encoder_calls,
            "stored_templates": self.stored_templates,
            "wall_time": self.wall_time,
            "fps": self.fps,
        }


def _caixa_na_grade(centro: Tuple[int, int], tamanho: Tuple[int, int], altura: int, largura: int) -> Box:
    """Caixa centrada em `centro`, deslocada para caber inteira na grade."""
    h, w = tamanho
    linha = min(max(centro[0], h // 2), altura - h + h // 2)
    coluna = min(max(centro[1], w // 2), largura - w + w // 2)
    return box_from_center((linha, coluna), tamanho)


class TransformerTracker:
    """
    Sessão de rastreamento: mantém o conjunto de templates, o modelo de
    rastreamento (núcleo Siamese ou filtro DCF) e o estado do quadro anterior.
    Estritamente sequencial.
    """

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.usa_codificador, self.ramos = _COMPONENTES[cfg.transformer]
        self.metricas = MetricsCalculator()
        self.gate = ConfidenceGate(cfg.confidence_gate, cfg.gate_threshold)
        self.transformer: Optional[TransformerConfig] = None
        self.conjunto: Optional[TemplateEnsemble] = None
        self.caixas_templates: List[Box] = []
        self.codificado: Optional[EncodedTemplates] = None
        self.nucleo: Optional[CorrelationKernel] = None
        self.centro: Tuple[int, int] = (0, 0)
        self.tamanho: Tuple[int, int] = (1, 1)
        self.encoder_calls = 0

    def _mascara(self, centro: Tuple[int, int], altura: int, largura: int, sigma: float) -> MaskVector:
        rotulo = gaussian_label(altura, largura, normalized_center(*centro, altura, largura), sigma)
        return MaskVector(rotulo.data.ravel())

    def iniciar(self, quadro: SyntheticFrame) -> ResponseMap:
        """Inicializa a sessão a partir da verdade do primeiro quadro."""
        canais, altura, largura = quadro.feature.shape
        if self.usa_codificador:
            self.transformer = TransformerConfig.create(
                canais,
                seed=self.cfg.projection_seed,
                projection=self.cfg.projection,
                tau=self.cfg.tau,
                eps=self.cfg.eps,
                use_mask_branch=bool(self.ramos and self.ramos[0]),
                use_feature_branch=bool(self.ramos and self.ramos[1]),
                weight_sharing=self.cfg.weight_sharing,
                shared_weights=self.cfg.shared_weights,
                cross_weights=self.cfg.cross_weights,
            )

        self.centro = quadro.center
        self.tamanho = quadro.size
        mascara = self._mascara(quadro.center, altura, largura, self.cfg.sigma_mask)
        self.conjunto = TemplateEnsemble.init(
            quadro.feature, mascara, self.cfg.max_size, self.cfg.interval, self.cfg.pin_first
        )
        self.caixas_templates = [_caixa_na_grade(quadro.center, self.tamanho, altura, largura)]
        self._codificar_templates()
        self._gerar_modelo()

        logger.debug(f"Sessão {self.cfg.label} iniciada em {quadro.center}")
        return ResponseMap(
            gaussian_label(
                altura, largura, normalized_center(*quadro.center, altura, largura), self.cfg.sigma_label
            ).data
        )

    def _codificar_templates(self) -> None:
        if self.usa_codificador:
            self.codificado = encode(self.conjunto, self.transformer)
            self.encoder_calls += 1
        else:
            _, altura, largura = self.conjunto.shape
            T = instance_normalize(reshape_to_embeddings(list(self.conjunto.templates)), self.cfg.eps)
            self.codificado = EncodedTemplates(T, len(self.conjunto), altura, largura)

    def _gerar_modelo(self) -> None:
        """Recria o núcleo de correlação a partir dos templates codificados."""
        if self.cfg.pipeline == "siamese":
            self.nucleo = crop_target_kernel(self.codificado, self.caixas_templates[-1])
            return

        altura, largura = self.codificado.height, self.codificado.width
        escala = math.sqrt(altura * largura)
        mapas = [m.scaled(escala) for m in self.codificado.to_feature_maps()]
        reescalado = EncodedTemplates(
            reshape_to_embeddings(mapas), self.codificado.n, altura, largura
        )
        rotulos = []
        for linha, coluna, h, w in self.caixas_templates:
            centro = (linha + h // 2, coluna + w // 2)
            rotulos.append(
                gaussian_label(
                    altura, largura, normalized_center(*centro, altura, largura), self.cfg.sigma_label
                )
            )
        self.nucleo = solve_dcf(reescalado, rotulos, self.cfg.dcf_lambda, self.cfg.kernel_size)

    def _decodificar(self, busca: FeatureMap) -> Tuple[FeatureMap, Optional[MaskVector]]:
        if self.ramos is None:
            S = instance_normalize(reshape_to_embeddings(busca), self.cfg.eps)
            return embeddings_to_feature_map(S, busca.height, busca.width), None
        decodificado = decode(busca, self.codificado, self.conjunto.mask_ensemble(), self.transformer)
        return decodificado.to_feature_map(), decodificado.propagated_mask

    def _resposta(self, busca: FeatureMap) -> ResponseMap:
        if self.cfg.pipeline == "dcf":
            busca = busca.scaled(math.sqrt(busca.height * busca.width))
        resposta = cross_correlate(self.nucleo, busca)
        if self.cfg.window == "hann":
            resposta = apply_window(resposta, self.centro, self.cfg.window_weight)
        return resposta

    def processar_quadro(
        self, quadro: SyntheticFrame, indice: int
    ) -> Tuple[Tuple[int, int], Box, ResponseMap, Optional[MaskVector]]:
        busca = quadro.feature
        decodificada, mascara_propagada = self._decodificar(busca)
        resposta = self._resposta(decodificada)
        centro = localize(resposta)
        caixa = _caixa_na_grade(centro, self.tamanho, busca.height, busca.width)
        self.centro = centro

        permitido = self.gate.permite(resposta.peak)
        if permitido:
            centro_mascara = quadro.center if self.cfg.oracle_masks else centro
            mascara = self._mascara(centro_mascara, busca.height, busca.width, self.cfg.sigma_mask)
            self.conjunto, atualizado = self.conjunto.maybe_update(busca, mascara, indice)
            if atualizado:
                self.caixas_templates.append(caixa)
                if len(self.caixas_templates) > len(self.conjunto):
                    descarte = 1 if (self.cfg.pin_first and self.cfg.max_size >= 2) else 0
                    del self.caixas_templates[descarte]
                self._codificar_templates()
                self._gerar_modelo()
                logger.debug(f"Quadro {indice}: conjunto com {len(self.conjunto)} templates")
        return centro, caixa, resposta, mascara_propagada


def track(seq: Sequence[SyntheticFrame], cfg: TrackerConfig) -> TrackResult:
    """
    Rastreia a sequência inteira a partir da verdade do quadro 0. O quadro 0
    entra na tabela com IoU 1, mas fica fora das médias.
    """
    if len(seq) < 2:
        raise ParameterError(f"Sequência com {len(seq)} quadro(s); são necessários ao menos 2.")

    inicio = time.perf_counter()
    rastreador = TransformerTracker(cfg)
    resposta_inicial = rastreador.iniciar(seq[0])
    _, altura, largura = seq[0].feature.shape

    centros = [seq[0].center]
    caixas = [_caixa_na_grade(seq[0].center, seq[0].size, altura, largura)]
    sobreposicoes = [1.0]
    respostas = [resposta_inicial.data] if cfg.keep_responses else None
    mascaras = (
        [rastreador.conjunto.masks[0].data.reshape(altura, largura)] if cfg.keep_masks else None
    )

    for t in range(1, len(seq)):
        quadro = seq[t]
        centro, caixa, resposta, mascara = rastreador.processar_quadro(quadro, t)
        centros.append(centro)
        caixas.append(caixa)
        sobreposicoes.append(iou(caixa, quadro.box) if quadro.visible else 0.0)
        if respostas is not None:
            respostas.append(resposta.data)
        if mascaras is not None:
            mascaras.append(
                np.zeros((altura, largura)) if mascara is None else mascara.data.reshape(altura, largura)
            )

    duracao = time.perf_counter() - inicio
    sobreposicoes = np.asarray(sobreposicoes)
    metricas = rastreador.metricas.calcular_metricas(sobreposicoes[1:])
    return TrackResult(
        centers=centros,
        boxes=caixas,
        overlaps=sobreposicoes,
        ao=metricas["ao"],
        sr_050=metricas["sr_050"],
        sr_075=metricas["sr_075"],
        auc=metricas["auc"],
        encoder_calls=rastreador.encoder_calls,
        stored_templates=len(rastreador.conjunto),
        wall_time=duracao,
        responses=np.stack(respostas) if respostas is not None else None,
        masks=np.stack(mascaras) if mascaras is not None else None,
    )


def _sequencias(suite: Sequence[Union[SceneSpec, Sequence[SyntheticFrame]]]) -> List[List[SyntheticFrame]]:
    return [generate(cena) if isinstance(cena, SceneSpec) else list(cena) for cena in suite]


def _executar_sessoes(
    sequencias: List[List[SyntheticFrame]],
    modos: Sequence[TrackerConfig],
    threads: int,
    descricao: str,
) -> Dict[Tuple[int, int], TrackResult]:
    """Executa cada (modo, cena) de forma independente; resultados indexados."""
    tarefas = [(m, s) for m in range(len(modos)) for s in range(len(sequencias))]
    resultados: Dict[Tuple[int, int], TrackResult] = {}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        futuros = {
            executor.submit(track, sequencias[s], modos[m]): (m, s) for m, s in tarefas
        }
        for futuro in tqdm(as_completed(futuros), total=len(futuros), desc=descricao, leave=False):
            m, s = futuros[futuro]
            try:
                resultados[(m, s)] = futuro.result()
            except Exception as e:
                logger.error(f"Erro na sessão {modos[m].label}, cena {s}: {e}")
                logger.debug(traceback.format_exc())
                raise
    return resultados


def run_ablation(
    suite: Sequence[Union[SceneSpec, Sequence[SyntheticFrame]]],
    modes: Sequence[TrackerConfig],
    threads: int = 1,
) -> pd.DataFrame:
    """
    Média de AO/SR/AUC por configuração sobre a suíte. As linhas seguem a
    ordem fixa pipeline (siamese, dcf) × modo (off … full).
    """
    if not suite:
        raise ParameterError("Suíte vazia.")
    if not modes:
        raise ParameterError("Nenhuma configuração para a ablação.")

    sequencias = _sequencias(suite)
    logger.info(f"Ablação: {len(modes)} configurações × {len(sequencias)} cenas, {threads} thread(s)")
    resultados = _executar_sessoes(sequencias, modes, threads, "ablação")

    linhas = []
    for m, cfg in enumerate(modes):
        sessoes = [resultados[(m, s)] for s in range(len(sequencias))]
        linhas.append(
            (
                cfg.pipeline,
                cfg.transformer,
                float(np.mean([r.ao for r in sessoes])),
                float(np.mean([r.sr_050 for r in sessoes])),
                float(np.mean([r.sr_075 for r in sessoes])),
                float(np.mean([r.auc for r in sessoes])),
                float(np.mean([r.encoder_calls for r in sessoes])),
                float(sum(r.frames for r in sessoes) / max(sum(r.wall_time for r in sessoes), 1e-12)),
            )
        )
    tabela = pd.DataFrame(linhas, columns=COLUNAS_ABLACAO)
    tabela["_p"] = tabela["pipeline"].map(PIPELINES.index)
    tabela["_m"] = tabela["transformer"].map(MODOS.index)
    tabela = tabela.sort_values(["_p", "_m"], kind="stable").drop(columns=["_p", "_m"])
    return tabela.reset_index(drop=True)


def run_memory_sweep(
    suite: Sequence[Union[SceneSpec, Sequence[SyntheticFrame]]],
    intervals: Sequence[int] = (1, 5, 10),
    sizes: Sequence[int] = (1, 10, 20, 30),
    base_cfg: Optional[TrackerConfig] = None,
    threads: int = 1,
) -> pd.DataFrame:
    """
    AO médio por (intervalo de amostragem, tamanho máximo do conjunto).
    """
    if not suite:
        raise ParameterError("Suíte vazia.")
    if not intervals or not sizes:
        raise ParameterError("Grade de varredura vazia.")
    base = base_cfg or TrackerConfig()
    modos = [
        TrackerConfig.model_validate({**base.model_dump(), "interval": i, "max_size": n})
        for i in intervals
        for n in sizes
    ]

    sequencias = _sequencias(suite)
    resultados = _executar_sessoes(sequencias, modos, threads, "varredura")
    linhas = []
    for m, cfg in enumerate(modos):
        sessoes = [resultados[(m, s)] for s in range(len(sequencias))]
        linhas.append(
            (
                cfg.interval,
                cfg.max_size,
                float(np.mean([r.ao for r in sessoes])),
                float(np.mean([r.sr_050 for r in sessoes])),
            )
        )
    return pd.DataFrame(linhas, columns=["interval", "max_size", "ao", "sr_050"])
