import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from errors import ConfigError, DimensionError, ParameterError
from tensor_core import EPS_PADRAO, EmbeddingMatrix, l2_normalize_rows

logger = logging.getLogger(__name__)

TAU_PADRAO = 1.0 / 30.0

# Cabeçalho de 8 bytes: magic (4), canais de entrada (uint16), canais de saída (uint16)
MAGIC_PESOS = b"TCTW"
FORMATO_CABECALHO = "<4sHH"


@dataclass(frozen=True)
class Temperature:
    tau: float = TAU_PADRAO

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ParameterError(f"Temperatura deve ser positiva, recebido {self.tau}")


def como_temperatura(tau: Union[Temperature, float]) -> Temperature:
    return tau if isinstance(tau, Temperature) else Temperature(float(tau))


def canais_reduzidos(channels: int) -> int:
    """Redução padrão C -> ceil(C/4)."""
    return max(1, math.ceil(channels / 4))


@dataclass(frozen=True, eq=False)
class LinearProjection:
    """
    Transformação linear 1×1 sem bias: (N×C) -> (N×C_out).
    `weights` tem forma (C_out, C).
    """

    weights: np.ndarray

    def __post_init__(self):
        pesos = np.array(self.weights, dtype=np.float64)
        if pesos.ndim != 2 or 0 in pesos.shape:
            raise DimensionError(f"Pesos de projeção inválidos: {pesos.shape}")
        if not np.all(np.isfinite(pesos)):
            raise ParameterError("Pesos de projeção contêm NaN ou Inf.")
        pesos.setflags(write=False)
        object.__setattr__(self, "weights", pesos)

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def uniform(
        cls, channels: int, seed: int, out_channels: Optional[int] = None
    ) -> "LinearProjection":
        """
        Inicialização uniforme em [-1/sqrt(C), 1/sqrt(C)].
        """
        saida = out_channels or canais_reduzidos(channels)
        limite = 1.0 / math.sqrt(channels)
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-limite, limite, size=(saida, channels)))

    @classmethod
    def orthonormal(
        cls, channels: int, seed: int, out_channels: Optional[int] = None
    ) -> "LinearProjection":
        """
        Projeção com linhas ortonormais ("passthrough"): embeddings parecidos
        continuam parecidos depois da projeção.
        """
        saida = out_channels or canais_reduzidos(channels)
        if saida > channels:
            raise DimensionError(f"Projeção ortonormal exige {saida} <= {channels}")
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((channels, saida)))
        # Fixa o sinal para que a fatoração QR seja única
        q = q * np.sign(np.diag(r))
        return cls(q.T)

    def save(self, caminho: Union[str, Path]) -> None:
        if max(self.weights.shape) > 0xFFFF:
            raise ParameterError("Projeção grande demais para o formato binário.")
        cabecalho = struct.pack(
            FORMATO_CABECALHO, MAGIC_PESOS, self.in_channels, self.out_channels
        )
        with open(caminho, "wb") as f:
            f.write(cabecalho)
            f.write(self.weights.astype("<f8").tobytes())
        logger.info(f"Pesos {self.out_channels}x{self.in_channels} salvos em {caminho}")

    @classmethod
    def load(cls, caminho: Union[str, Path]) -> "LinearProjection":
        with open(caminho, "rb") as f:
            bruto = f.read()
        tamanho = struct.calcsize(FORMATO_CABECALHO)
        if len(bruto) < tamanho:
            raise ConfigError("arquivo de pesos truncado", str(caminho))
        magic, entrada, saida = struct.unpack(FORMATO_CABECALHO, bruto[:tamanho])
        if magic != MAGIC_PESOS:
            raise ConfigError(f"magic inválido {magic!r}", str(caminho))
        esperado = tamanho + 8 * entrada * saida
        if len(bruto) != esperado:
            raise ConfigError(
                f"tamanho {len(bruto)} bytes, esperado {esperado}", str(caminho)
            )
        pesos = np.frombuffer(bruto[tamanho:], dtype="<f8").reshape(saida, entrada)
        return cls(pesos)


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    """
    Matriz Nq×Nk estocástica por linha: os pesos de cada consulta somam 1.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"Matriz de atenção deve ser 2D: {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_query(self) -> int:
        return self.data.shape[0]

    @property
    def n_key(self) -> int:
        return self.data.shape[1]


def project(p: LinearProjection, X: EmbeddingMatrix) -> EmbeddingMatrix:
    if X.cols != p.in_channels:
        raise DimensionError(
            f"Projeção espera {p.in_channels} canais, recebeu {X.cols}."
        )
    return EmbeddingMatrix(X.data @ p.weights.T, block_rows=X.block_rows)


def attention(
    Q: EmbeddingMatrix,
    K: EmbeddingMatrix,
    tau: Union[Temperature, float] = TAU_PADRAO,
    eps: float = EPS_PADRAO,
) -> AttentionMatrix:
    """
    Softmax(Q̄ K̄ᵀ / tau) normalizado sobre as chaves, com Q̄ e K̄ normalizados
    por linha.
    """
    tau = como_temperatura(tau)
    if Q.cols != K.cols:
        raise DimensionError(f"Consulta com {Q.cols} canais e chave com {K.cols}.")

    q = l2_normalize_rows(Q, eps).data
    k = l2_normalize_rows(K, eps).data
    logits = (q @ k.T) / tau.tau

    # Estabilização: subtrai o máximo de cada linha antes da exponencial
    logits -= logits.max(axis=1, keepdims=True)
    pesos = np.exp(logits)
    pesos /= pesos.sum(axis=1, keepdims=True)
    return AttentionMatrix(pesos)


def transform_values(
    A: AttentionMatrix, V: EmbeddingMatrix, block_rows: Optional[int] = None
) -> EmbeddingMatrix:
    if A.n_key != V.rows:
        raise DimensionError(f"Atenção com {A.n_key} chaves e valores com {V.rows} linhas.")
    return EmbeddingMatrix(A.data @ V.data, block_rows=block_rows)
