import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from errors import DimensionError, TrackerError

logger = logging.getLogger(__name__)

FORMATO_FLOAT = "%.10g"
TIPOS_EXPORTACAO = ("responses", "masks")


def normalizar_cinza(mapa: np.ndarray) -> np.ndarray:
    """
    Escala min-max para 0..255 (piso). Mapa constante vira cinza 128.
    Só o valor máximo recebe 255, então o pico da imagem é o pico do mapa.
    """
    mapa = np.asarray(mapa, dtype=np.float64)
    minimo, maximo = float(mapa.min()), float(mapa.max())
    if maximo == minimo:
        return np.full(mapa.shape, 128, dtype=np.uint8)
    escalado = np.floor(255.0 * (mapa - minimo) / (maximo - minimo))
    return np.clip(escalado, 0, 255).astype(np.uint8)


def escrever_pgm(mapa: np.ndarray, caminho: Union[str, Path]) -> None:
    """Graymap binário (P5), 8 bits."""
    if np.ndim(mapa) != 2:
        raise DimensionError(f"PGM exige mapa 2D, recebido {np.shape(mapa)}")
    cinza = normalizar_cinza(mapa)
    altura, largura = cinza.shape
    with open(caminho, "wb") as f:
        f.write(f"P5\n{largura} {altura}\n255\n".encode("ascii"))
        f.write(cinza.tobytes())


def ler_pgm(caminho: Union[str, Path]) -> np.ndarray:
    with open(caminho, "rb") as f:
        bruto = f.read()
    partes = bruto.split(b"\n", 3)
    if len(partes) != 4 or partes[0] != b"P5":
        raise TrackerError(f"{caminho}: não é um PGM P5")
    largura, altura = (int(v) for v in partes[1].split())
    return np.frombuffer(partes[3], dtype=np.uint8).reshape(altura, largura)


class ResultWriter:
    """
    Dono do diretório de saída de uma execução. Todos os artefatos ficam
    abaixo de `diretorio`.
    """

    def __init__(self, diretorio: Union[str, Path]):
        self.diretorio = Path(diretorio)
        self.diretorio.mkdir(parents=True, exist_ok=True)

    def _caminho(self, nome: str) -> Path:
        return self.diretorio / nome

    def registrar_resultado(self, tabela: pd.DataFrame) -> Path:
        caminho = self._caminho("result.csv")
        tabela.to_csv(caminho, index=False, float_format=FORMATO_FLOAT, lineterminator="\n")
        logger.info(f"Resultado por quadro salvo em {caminho}")
        return caminho

    def registrar_resumo(self, resumo: Dict[str, object], cabecalho: Dict[str, object]) -> Path:
        caminho = self._caminho("summary.txt")
        with open(caminho, "w", encoding="utf-8") as f:
            for chave, valor in {**cabecalho, **resumo}.items():
                f.write(f"{chave}: {valor:.6f}\n" if isinstance(valor, float) else f"{chave}: {valor}\n")
        return caminho

    def registrar_tabela(self, tabela: pd.DataFrame, nome: str) -> Path:
        caminho = self._caminho(nome)
        tabela.to_csv(caminho, index=False, float_format="%.6f", lineterminator="\n")
        logger.info(f"Tabela {nome} salva em {caminho} ({len(tabela)} linhas)")
        return caminho

    def registrar_mapas(self, mapas: np.ndarray, tipo: str) -> Path:
        """Guarda a pilha (quadros × H × W) para exportação posterior."""
        if tipo not in TIPOS_EXPORTACAO:
            raise TrackerError(f"Tipo de exportação desconhecido: {tipo}")
        caminho = self._caminho(f"{tipo}.npy")
        np.save(caminho, np.asarray(mapas, dtype=np.float64))
        return caminho

    def exportar_mapas(self, tipo: str) -> int:
        """
        Converte `<tipo>.npy` em `<tipo>/frame_NNNN.pgm` e `frame_NNNN.csv`.
        Devolve o número de quadros exportados.
        """
        origem = self._caminho(f"{tipo}.npy")
        if not origem.is_file():
            raise TrackerError(f"Artefato ausente: {origem} (execute track com --export {tipo})")
        mapas = np.load(origem)
        if mapas.ndim != 3:
            raise DimensionError(f"{origem}: esperado quadros × H × W, recebido {mapas.shape}")

        destino = self._caminho(tipo)
        destino.mkdir(exist_ok=True)
        for t, mapa in enumerate(mapas):
            escrever_pgm(mapa, destino / f"frame_{t:04d}.pgm")
            np.savetxt(destino / f"frame_{t:04d}.csv", mapa, delimiter=",", fmt="%.10g")
        logger.info(f"{len(mapas)} quadros de {tipo} exportados para {destino}")
        return len(mapas)
