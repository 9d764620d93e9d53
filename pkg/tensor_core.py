import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

EPS_PADRAO = 1e-12


def _congelar(valores, ndim: int) -> np.ndarray:
    """
    Copia os valores para um ndarray float64 somente-leitura.
    """
    data = np.array(valores, dtype=np.float64)
    if data.ndim != ndim:
        raise DimensionError(f"Esperado tensor com {ndim} eixos, recebido {data.ndim}.")
    if any(s <= 0 for s in data.shape):
        raise DimensionError(f"Dimensões devem ser positivas: {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ParameterError("Tensor contém NaN ou Inf.")
    data.setflags(write=False)
    return data


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """
    Mapa de características C×H×W armazenado em ordem canal-maior.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _congelar(self.data, 3))

    @classmethod
    def from_flat(
        cls, channels: int, height: int, width: int, valores: Sequence[float]
    ) -> "FeatureMap":
        valores = np.asarray(valores, dtype=np.float64).ravel()
        if valores.size != channels * height * width:
            raise DimensionError(
                f"Esperados {channels * height * width} valores para "
                f"{channels}x{height}x{width}, recebidos {valores.size}."
            )
        return cls(valores.reshape(channels, height, width))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def scaled(self, alpha: float) -> "FeatureMap":
        return FeatureMap(self.data * alpha)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """
    Matriz N×C de embeddings (uma linha por posição espacial).
    `block_rows` indica quantas linhas pertencem a cada patch (H·W); None
    significa que a matriz inteira é um único patch.
    """

    data: np.ndarray
    block_rows: Optional[int] = None

    def __post_init__(self):
        data = _congelar(self.data, 2)
        object.__setattr__(self, "data", data)
        if self.block_rows is not None:
            if self.block_rows <= 0 or data.shape[0] % self.block_rows != 0:
                raise DimensionError(
                    f"{data.shape[0]} linhas não se dividem em blocos de {self.block_rows}."
                )

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def n_blocks(self) -> int:
        if self.block_rows is None:
            return 1
        return self.rows // self.block_rows

    def block(self, indice: int) -> "EmbeddingMatrix":
        tamanho = self.block_rows or self.rows
        inicio = indice * tamanho
        return EmbeddingMatrix(self.data[inicio : inicio + tamanho], tamanho)


@dataclass(frozen=True, eq=False)
class MaskVector:
    """
    Vetor de máscara com valores em [0, 1].
    """

    data: np.ndarray

    def __post_init__(self):
        data = _congelar(self.data, 1)
        if np.any(data < 0.0) or np.any(data > 1.0):
            raise ParameterError("Valores de máscara devem estar em [0, 1].")
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @classmethod
    def concat(cls, mascaras: Sequence["MaskVector"]) -> "MaskVector":
        return cls(np.concatenate([m.data for m in mascaras]))


def reshape_to_embeddings(
    fm: Union[FeatureMap, Sequence[FeatureMap]],
) -> EmbeddingMatrix:
    """
    C×H×W -> (H·W)×C. A linha r corresponde ao índice espacial r (linha-maior);
    para um conjunto de mapas, os blocos são concatenados mapa a mapa.
    """
    mapas = [fm] if isinstance(fm, FeatureMap) else list(fm)
    if not mapas:
        raise DimensionError("Nenhum mapa de características para remodelar.")

    forma = mapas[0].shape
    for mapa in mapas[1:]:
        if mapa.shape != forma:
            raise DimensionError(f"Formas divergentes no conjunto: {mapa.shape} != {forma}")

    c, h, w = forma
    blocos = [mapa.data.reshape(c, h * w).T for mapa in mapas]
    return EmbeddingMatrix(np.concatenate(blocos, axis=0), block_rows=h * w)


def embeddings_to_feature_maps(
    X: EmbeddingMatrix, height: int, width: int
) -> List[FeatureMap]:
    """
    Inversa exata de reshape_to_embeddings.
    """
    n_pixels = height * width
    if X.rows % n_pixels != 0:
        raise DimensionError(
            f"{X.rows} linhas não correspondem a blocos de {height}x{width}."
        )
    return [
        FeatureMap(X.data[i : i + n_pixels].T.reshape(X.cols, height, width))
        for i in range(0, X.rows, n_pixels)
    ]


def embeddings_to_feature_map(X: EmbeddingMatrix, height: int, width: int) -> FeatureMap:
    mapas = embeddings_to_feature_maps(X, height, width)
    if len(mapas) != 1:
        raise DimensionError(f"Esperado um único patch, encontrados {len(mapas)}.")
    return mapas[0]


def matmul(A: EmbeddingMatrix, B: EmbeddingMatrix) -> EmbeddingMatrix:
    if A.cols != B.rows:
        raise DimensionError(f"matmul: {A.rows}x{A.cols} por {B.rows}x{B.cols}")
    return EmbeddingMatrix(np.matmul(A.data, B.data), block_rows=A.block_rows)


def l2_normalize_rows(X: EmbeddingMatrix, eps: float = EPS_PADRAO) -> EmbeddingMatrix:
    """
    Divide cada linha por max(||linha||, eps).
    """
    if eps <= 0:
        raise ParameterError(f"eps deve ser positivo, recebido {eps}")
    normas = np.linalg.norm(X.data, axis=1, keepdims=True)
    return EmbeddingMatrix(X.data / np.maximum(normas, eps), block_rows=X.block_rows)


def instance_normalize(
    X: EmbeddingMatrix, eps: float = EPS_PADRAO, count_rescale: bool = False
) -> EmbeddingMatrix:
    """
    Normaliza conjuntamente (norma de Frobenius) todos os embeddings de cada patch.

    :param X: matriz particionada em blocos de `block_rows` linhas.
    :param eps: piso da norma, evita divisão por zero.
    :param count_rescale: multiplica por sqrt(linhas do bloco) para que a norma
        média por pixel seja 1. Desligado por padrão (divisão ℓ2 pura).
    """
    if eps <= 0:
        raise ParameterError(f"eps deve ser positivo, recebido {eps}")

    tamanho = X.block_rows or X.rows
    blocos = X.data.reshape(X.rows // tamanho, tamanho, X.cols)
    normas = np.sqrt(np.sum(blocos * blocos, axis=(1, 2), keepdims=True))
    saida = blocos / np.maximum(normas, eps)
    if count_rescale:
        saida = saida * np.sqrt(tamanho)

    return EmbeddingMatrix(saida.reshape(X.rows, X.cols), block_rows=X.block_rows)
