import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from errors import ConfigError, DimensionError, OutOfBounds, ParameterError
from temporal_transformer import EncodedTemplates
from tensor_core import FeatureMap

logger = logging.getLogger(__name__)

LAMBDA_PADRAO = 1e-2
SIGMA_PADRAO = 0.1
LIMITE_INCOGNITAS = 2000

# Mesmo cabeçalho de 8 bytes dos pesos: magic (4), C (uint16), kh (uint8), kw (uint8)
MAGIC_NUCLEO = b"TCTK"
FORMATO_NUCLEO = "<4sHBB"

Box = Tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class CorrelationKernel:
    data: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or 0 in data.shape:
            raise DimensionError(f"Núcleo deve ser C×kh×kw, recebido {data.shape}")
        if not np.all(np.isfinite(data)) or not math.isfinite(self.bias):
            raise ParameterError("Núcleo com valores não finitos.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class GaussianLabel:
    data: np.ndarray
    center: Tuple[float, float]
    sigma: float

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class ResponseMap:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"Mapa de resposta deve ser 2D: {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ParameterError("Mapa de resposta com valores não finitos.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def peak(self) -> float:
        return float(self.data.max())

    def argmax(self) -> Tuple[int, int]:
        # np.argmax devolve a primeira ocorrência: menor índice linha-maior
        indice = int(np.argmax(self.data))
        return divmod(indice, self.width)


def normalized_center(row: float, col: float, height: int, width: int) -> Tuple[float, float]:
    """Centro da célula (row, col) em coordenadas normalizadas [0,1]²."""
    return ((row + 0.5) / height, (col + 0.5) / width)


def box_from_center(center: Tuple[int, int], size: Tuple[int, int]) -> Box:
    """Caixa (linha, coluna, altura, largura) centrada na célula `center`."""
    altura, largura = size
    return (center[0] - altura // 2, center[1] - largura // 2, altura, largura)


def gaussian_label(
    height: int, width: int, center: Tuple[float, float], sigma: float = SIGMA_PADRAO
) -> GaussianLabel:
    """
    exp(-||y - c||² / (2σ²)) avaliado nos centros das células
    ((i+0.5)/H, (j+0.5)/W).
    """
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ParameterError(f"sigma deve ser positivo e finito, recebido {sigma}")
    if height <= 0 or width <= 0:
        raise ParameterError(f"Grade inválida {height}x{width}")
    cy, cx = center
    if not (0.0 <= cy <= 1.0 and 0.0 <= cx <= 1.0):
        raise ParameterError(f"Centro {center} fora de [0,1]²")

    ys = (np.arange(height) + 0.5) / height
    xs = (np.arange(width) + 0.5) / width
    d2 = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2
    return GaussianLabel(np.exp(-d2 / (2.0 * sigma**2)), (cy, cx), float(sigma))


def _deslocamentos(kh: int, kw: int) -> Tuple[int, int]:
    return kh // 2, kw // 2


def cross_correlate(kernel: CorrelationKernel, search: FeatureMap) -> ResponseMap:
    """
    Correlação multicanal em modo válido, somada nos canais, mais o bias; a
    saída é preenchida com zeros até H×W, centrada, de modo que a resposta na
    célula p corresponde ao núcleo centrado em p.
    """
    if kernel.channels != search.channels:
        raise DimensionError(
            f"Núcleo com {kernel.channels} canais, busca com {search.channels}."
        )
    kh, kw = kernel.height, kernel.width
    if kh > search.height or kw > search.width:
        raise DimensionError(
            f"Núcleo {kh}x{kw} não cabe na busca {search.height}x{search.width}."
        )

    janelas = sliding_window_view(search.data, (kh, kw), axis=(1, 2))
    valido = np.einsum("cijab,cab->ij", janelas, kernel.data) + kernel.bias

    topo, esquerda = _deslocamentos(kh, kw)
    resposta = np.zeros((search.height, search.width))
    resposta[topo : topo + valido.shape[0], esquerda : esquerda + valido.shape[1]] = valido
    return ResponseMap(resposta)


def crop_target_kernel(encoded: EncodedTemplates, target_box: Box) -> CorrelationKernel:
    """
    Recorta o alvo do template mais recente do conjunto codificado.
    """
    linha, coluna, altura, largura = (int(v) for v in target_box)
    if (
        altura <= 0
        or largura <= 0
        or linha < 0
        or coluna < 0
        or linha + altura > encoded.height
        or coluna + largura > encoded.width
    ):
        raise OutOfBounds(
            f"Caixa {target_box} fora do template {encoded.height}x{encoded.width}."
        )
    recente = encoded.latest()
    return CorrelationKernel(
        recente.data[:, linha : linha + altura, coluna : coluna + largura], bias=0.0
    )


def _como_tamanho(kernel_size: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(kernel_size, int):
        return kernel_size, kernel_size
    kh, kw = kernel_size
    return int(kh), int(kw)


def design_matrix(mapa: FeatureMap, kernel_size: Union[int, Sequence[int]]) -> np.ndarray:
    """
    Operador de correlação como matriz explícita: uma linha por posição válida
    (linha-maior), colunas na ordem (canal, linha, coluna) do núcleo.
    """
    kh, kw = _como_tamanho(kernel_size)
    janelas = sliding_window_view(mapa.data, (kh, kw), axis=(1, 2))
    _, ph, pw, _, _ = janelas.shape
    return janelas.transpose(1, 2, 0, 3, 4).reshape(ph * pw, mapa.channels * kh * kw)


def solve_dcf(
    encoded: EncodedTemplates,
    labels: Sequence[GaussianLabel],
    lam: float = LAMBDA_PADRAO,
    kernel_size: Union[int, Sequence[int]] = 3,
) -> CorrelationKernel:
    """
    Minimizador exato de Σ_i ||f ∗ T_i − y_i||² + λ||f||², resolvido pelas
    equações normais com fatoração de Cholesky.

    :param encoded: templates codificados (um rótulo por template).
    :param labels: rótulos gaussianos H×W; apenas a região válida é usada.
    :param lam: regularização (λ >= 0; λ = 0 só com sistema de posto completo).
    :param kernel_size: k ou (kh, kw).
    """
    if lam < 0 or not math.isfinite(lam):
        raise ParameterError(f"lambda deve ser não negativo, recebido {lam}")
    mapas = encoded.to_feature_maps()
    if len(labels) != len(mapas):
        raise DimensionError(f"{len(labels)} rótulos para {len(mapas)} templates.")

    kh, kw = _como_tamanho(kernel_size)
    if kh > encoded.height or kw > encoded.width:
        raise DimensionError(f"Núcleo {kh}x{kw} maior que o template.")
    incognitas = mapas[0].channels * kh * kw
    if incognitas > LIMITE_INCOGNITAS:
        logger.warning(f"Sistema DCF com {incognitas} incógnitas; a solução densa pode ser lenta.")

    topo, esquerda = _deslocamentos(kh, kw)
    ph, pw = encoded.height - kh + 1, encoded.width - kw + 1
    blocos_x, blocos_y = [], []
    for mapa, rotulo in zip(mapas, labels):
        if rotulo.data.shape != (encoded.height, encoded.width):
            raise DimensionError(f"Rótulo {rotulo.data.shape} não combina com o template.")
        blocos_x.append(design_matrix(mapa, (kh, kw)))
        blocos_y.append(rotulo.data[topo : topo + ph, esquerda : esquerda + pw].ravel())
    X = np.vstack(blocos_x)
    y = np.concatenate(blocos_y)

    if lam == 0 and np.linalg.matrix_rank(X) < incognitas:
        raise ParameterError("Sistema singular com lambda = 0; use lambda > 0.")

    gram = X.T @ X + lam * np.eye(incognitas)
    try:
        fator = cho_factor(gram)
    except LinAlgError as e:
        raise ParameterError(f"Sistema DCF não é definido positivo ({e}); use lambda > 0.") from e
    f = cho_solve(fator, X.T @ y)

    logger.debug(f"DCF resolvido: {X.shape[0]} amostras, {incognitas} incógnitas, λ={lam}")
    return CorrelationKernel(f.reshape(mapas[0].channels, kh, kw), bias=0.0)


def hann_window(
    height: int,
    width: int,
    center: Tuple[int, int],
    half_size: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """
    Janela de Hann separável centrada em `center`; vale 1 no centro e 0 a
    partir de `half_size` células de distância.
    """
    meia_altura, meia_largura = half_size or (height / 2.0, width / 2.0)

    def perfil(n: int, c: int, meia: float) -> np.ndarray:
        d = np.abs(np.arange(n) - c)
        valores = 0.5 * (1.0 + np.cos(np.pi * d / meia))
        return np.where(d < meia, valores, 0.0)

    return np.outer(perfil(height, center[0], meia_altura), perfil(width, center[1], meia_largura))


def apply_window(
    response: ResponseMap,
    center: Tuple[int, int],
    weight: float,
    half_size: Optional[Tuple[float, float]] = None,
) -> ResponseMap:
    """
    Mistura multiplicativa r·(1−w) + r·hann·w, aplicada sobre r − min(r)
    para que o fator nunca inverta a ordem de escores negativos.
    """
    if not 0.0 <= weight <= 1.0:
        raise ParameterError(f"Peso da janela deve estar em [0,1], recebido {weight}")
    deslocado = response.data - response.data.min()
    janela = hann_window(response.height, response.width, center, half_size)
    return ResponseMap(deslocado * ((1.0 - weight) + weight * janela))


def localize(response: ResponseMap) -> Tuple[int, int]:
    return response.argmax()


def save_kernel(kernel: CorrelationKernel, caminho: Union[str, Path]) -> None:
    if kernel.channels > 0xFFFF or kernel.height > 0xFF or kernel.width > 0xFF:
        raise ParameterError("Núcleo grande demais para o formato binário.")
    with open(caminho, "wb") as f:
        f.write(
            struct.pack(FORMATO_NUCLEO, MAGIC_NUCLEO, kernel.channels, kernel.height, kernel.width)
        )
        f.write(struct.pack("<d", kernel.bias))
        f.write(kernel.data.astype("<f8").tobytes())


def load_kernel(caminho: Union[str, Path]) -> CorrelationKernel:
    with open(caminho, "rb") as f:
        bruto = f.read()
    tamanho = struct.calcsize(FORMATO_NUCLEO)
    if len(bruto) < tamanho + 8:
        raise ConfigError("arquivo de núcleo truncado", str(caminho))
    magic, canais, kh, kw = struct.unpack(FORMATO_NUCLEO, bruto[:tamanho])
    if magic != MAGIC_NUCLEO:
        raise ConfigError(f"magic inválido {magic!r}", str(caminho))
    (bias,) = struct.unpack("<d", bruto[tamanho : tamanho + 8])
    corpo = bruto[tamanho + 8 :]
    if len(corpo) != 8 * canais * kh * kw:
        raise ConfigError("tamanho do corpo não confere com o cabeçalho", str(caminho))
    return CorrelationKernel(np.frombuffer(corpo, dtype="<f8").reshape(canais, kh, kw), bias)
