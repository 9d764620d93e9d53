import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from attention_blocks import (
    TAU_PADRAO,
    AttentionMatrix,
    LinearProjection,
    Temperature,
    attention,
    como_temperatura,
    project,
    transform_values,
)
from errors import DimensionError, EmptyEnsemble, ParameterError
from tensor_core import (
    EPS_PADRAO,
    EmbeddingMatrix,
    FeatureMap,
    MaskVector,
    embeddings_to_feature_map,
    embeddings_to_feature_maps,
    instance_normalize,
    reshape_to_embeddings,
)

logger = logging.getLogger(__name__)

PROJECOES = ("orthonormal", "uniform")


@dataclass(frozen=True, eq=False)
class TransformerConfig:
    """
    Configuração do par codificador/decodificador de uma camada.

    Com `weight_sharing` ligado, a auto-atenção do codificador e a do
    decodificador usam o MESMO objeto de projeção (`shared_projection`).
    """

    channels: int
    shared_projection: LinearProjection
    cross_projection: LinearProjection
    tau: Temperature = Temperature(TAU_PADRAO)
    eps: float = EPS_PADRAO
    use_mask_branch: bool = True
    use_feature_branch: bool = True
    weight_sharing: bool = True
    decoder_projection: Optional[LinearProjection] = None
    count_rescale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tau", como_temperatura(self.tau))
        if self.eps <= 0:
            raise ParameterError(f"eps deve ser positivo, recebido {self.eps}")

        if self.weight_sharing:
            object.__setattr__(self, "decoder_projection", None)
        elif self.decoder_projection is None:
            raise ParameterError(
                "Sem compartilhamento de pesos é preciso informar decoder_projection."
            )

        for nome, projecao in (
            ("shared_projection", self.shared_projection),
            ("cross_projection", self.cross_projection),
            ("decoder_projection", self.decoder_projection),
        ):
            if projecao is not None and projecao.in_channels != self.channels:
                raise DimensionError(
                    f"{nome} espera {projecao.in_channels} canais, configuração tem {self.channels}."
                )

    @property
    def decoder_self_projection(self) -> LinearProjection:
        if self.weight_sharing:
            return self.shared_projection
        return self.decoder_projection

    @classmethod
    def create(
        cls,
        channels: int,
        seed: int = 0,
        projection: str = "orthonormal",
        tau: float = TAU_PADRAO,
        eps: float = EPS_PADRAO,
        use_mask_branch: bool = True,
        use_feature_branch: bool = True,
        weight_sharing: bool = True,
        shared_weights: Optional[Union[str, Path]] = None,
        cross_weights: Optional[Union[str, Path]] = None,
    ) -> "TransformerConfig":
        """
        Monta a configuração a partir de uma semente (ou de arquivos de pesos).
        φ usa `seed`, ϕ usa `seed + 1` e a projeção própria do decodificador
        (sem compartilhamento) usa `seed + 2`.
        """
        if projection not in PROJECOES:
            raise ParameterError(f"Projeção desconhecida: {projection}")
        fabrica = getattr(LinearProjection, projection)

        compartilhada = (
            LinearProjection.load(shared_weights)
            if shared_weights
            else fabrica(channels, seed)
        )
        cruzada = (
            LinearProjection.load(cross_weights)
            if cross_weights
            else fabrica(channels, seed + 1)
        )
        decodificador = None if weight_sharing else fabrica(channels, seed + 2)

        return cls(
            channels=channels,
            shared_projection=compartilhada,
            cross_projection=cruzada,
            tau=Temperature(tau),
            eps=eps,
            use_mask_branch=use_mask_branch,
            use_feature_branch=use_feature_branch,
            weight_sharing=weight_sharing,
            decoder_projection=decodificador,
        )

    def with_branches(self, mask: bool, feature: bool) -> "TransformerConfig":
        return replace(self, use_mask_branch=mask, use_feature_branch=feature)


@dataclass(frozen=True, eq=False)
class EncodedTemplates:
    embeddings: EmbeddingMatrix
    n: int
    height: int
    width: int

    def __post_init__(self):
        if self.embeddings.rows != self.n * self.height * self.width:
            raise DimensionError(
                f"{self.embeddings.rows} linhas para {self.n} templates {self.height}x{self.width}."
            )

    def to_feature_maps(self) -> List[FeatureMap]:
        return embeddings_to_feature_maps(self.embeddings, self.height, self.width)

    def latest(self) -> FeatureMap:
        return embeddings_to_feature_map(
            self.embeddings.block(self.n - 1), self.height, self.width
        )


@dataclass(frozen=True, eq=False)
class DecodedSearch:
    embeddings: EmbeddingMatrix
    height: int
    width: int
    propagated_mask: Optional[MaskVector] = None

    def __post_init__(self):
        if self.embeddings.rows != self.height * self.width:
            raise DimensionError(
                f"{self.embeddings.rows} linhas para busca {self.height}x{self.width}."
            )

    def to_feature_map(self) -> FeatureMap:
        return embeddings_to_feature_map(self.embeddings, self.height, self.width)


def _verificar_canais(canais: int, cfg: TransformerConfig) -> None:
    if canais != cfg.channels:
        raise DimensionError(f"Entrada com {canais} canais, configuração com {cfg.channels}.")


def _auto_atencao_residual(
    X: EmbeddingMatrix, projecao: LinearProjection, cfg: TransformerConfig
) -> EmbeddingMatrix:
    """
    Ins.Norm(Atten(φ(X), φ(X)) X + X).
    """
    projetado = project(projecao, X)
    A = attention(projetado, projetado, cfg.tau, cfg.eps)
    soma = transform_values(A, X).data + X.data
    return instance_normalize(
        EmbeddingMatrix(soma, X.block_rows), cfg.eps, cfg.count_rescale
    )


def _mapas_do_conjunto(templates) -> List[FeatureMap]:
    if isinstance(templates, FeatureMap):
        return [templates]
    return list(getattr(templates, "templates", templates))


def encode(templates, cfg: TransformerConfig) -> EncodedTemplates:
    """
    Codificador: reforço mútuo de todos os templates do conjunto.

    :param templates: TemplateEnsemble (ou sequência de FeatureMap).
    """
    mapas = _mapas_do_conjunto(templates)
    if not mapas:
        raise EmptyEnsemble("Conjunto de templates vazio.")
    _verificar_canais(mapas[0].channels, cfg)

    T = reshape_to_embeddings(mapas)
    codificado = _auto_atencao_residual(T, cfg.shared_projection, cfg)
    logger.debug(f"Codificados {len(mapas)} templates ({T.rows} embeddings).")
    return EncodedTemplates(codificado, len(mapas), mapas[0].height, mapas[0].width)


def decode_self(search: FeatureMap, cfg: TransformerConfig) -> EmbeddingMatrix:
    _verificar_canais(search.channels, cfg)
    S = reshape_to_embeddings(search)
    return _auto_atencao_residual(S, cfg.decoder_self_projection, cfg)


def cross_attention(
    S_hat: EmbeddingMatrix, T_hat: EncodedTemplates, cfg: TransformerConfig
) -> AttentionMatrix:
    """
    Correspondência pixel a pixel: cada pixel da busca distribui peso sobre
    todos os pixels de todos os templates.
    """
    if S_hat.cols != T_hat.embeddings.cols:
        raise DimensionError(
            f"Busca com {S_hat.cols} canais e templates com {T_hat.embeddings.cols}."
        )
    return attention(
        project(cfg.cross_projection, S_hat),
        project(cfg.cross_projection, T_hat.embeddings),
        cfg.tau,
        cfg.eps,
    )


def transform_mask(A: AttentionMatrix, M: MaskVector) -> MaskVector:
    """
    Máscara propagada A·M′: combinação convexa dos valores da máscara.
    """
    if A.n_key != M.length:
        raise DimensionError(f"Atenção com {A.n_key} chaves e máscara com {M.length}.")
    # O clip só remove arredondamento (A é estocástica por linha)
    return MaskVector(np.clip(A.data @ M.data, 0.0, 1.0))


def propagate_mask(
    A: AttentionMatrix,
    M: MaskVector,
    S_hat: EmbeddingMatrix,
    eps: float = EPS_PADRAO,
    count_rescale: bool = False,
) -> EmbeddingMatrix:
    if A.n_query != S_hat.rows:
        raise DimensionError(f"Atenção com {A.n_query} consultas e busca com {S_hat.rows}.")
    mascara = transform_mask(A, M).data
    produto = S_hat.data * mascara[:, None]
    return instance_normalize(
        EmbeddingMatrix(produto, S_hat.block_rows), eps, count_rescale
    )


def propagate_features(
    A: AttentionMatrix,
    T_hat: EncodedTemplates,
    M: MaskVector,
    S_hat: EmbeddingMatrix,
    eps: float = EPS_PADRAO,
    count_rescale: bool = False,
) -> EmbeddingMatrix:
    """
    Mascara os templates (suprime o fundo), transporta para as coordenadas da
    busca e soma como residual.
    """
    if A.n_query != S_hat.rows:
        raise DimensionError(f"Atenção com {A.n_query} consultas e busca com {S_hat.rows}.")
    if A.n_key != T_hat.embeddings.rows or M.length != T_hat.embeddings.rows:
        raise DimensionError(
            f"Atenção ({A.n_key}), máscara ({M.length}) e templates "
            f"({T_hat.embeddings.rows}) divergem."
        )
    mascarado = T_hat.embeddings.data * M.data[:, None]
    soma = A.data @ mascarado + S_hat.data
    return instance_normalize(EmbeddingMatrix(soma, S_hat.block_rows), eps, count_rescale)


def decode(
    search: FeatureMap,
    T_hat: EncodedTemplates,
    M: MaskVector,
    cfg: TransformerConfig,
) -> DecodedSearch:
    """
    Decodificador completo: auto-atenção da busca, depois os ramos de máscara
    e de característica (cada um pode ser desligado), combinados em partes iguais.
    """
    S_hat = decode_self(search, cfg)
    altura, largura = search.height, search.width

    if not (cfg.use_mask_branch or cfg.use_feature_branch):
        return DecodedSearch(S_hat, altura, largura)

    A = cross_attention(S_hat, T_hat, cfg)
    mascara = transform_mask(A, M)

    ramos = []
    if cfg.use_mask_branch:
        ramos.append(propagate_mask(A, M, S_hat, cfg.eps, cfg.count_rescale))
    if cfg.use_feature_branch:
        ramos.append(propagate_features(A, T_hat, M, S_hat, cfg.eps, cfg.count_rescale))

    if len(ramos) == 1:
        final = ramos[0]
    else:
        final = instance_normalize(
            EmbeddingMatrix(ramos[0].data + ramos[1].data, S_hat.block_rows),
            cfg.eps,
            cfg.count_rescale,
        )
    return DecodedSearch(final, altura, largura, propagated_mask=mascara)
