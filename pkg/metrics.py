import logging
from typing import Dict, Sequence

import numpy as np

from errors import ParameterError

logger = logging.getLogger(__name__)

LIMIARES_AUC = 21


def iou(boxA: Sequence[float], boxB: Sequence[float]) -> float:
    """
    Interseção sobre união de duas caixas (linha, coluna, altura, largura).
    """
    ra, ca, ha, wa = (float(v) for v in boxA)
    rb, cb, hb, wb = (float(v) for v in boxB)
    if ha <= 0 or wa <= 0 or hb <= 0 or wb <= 0:
        raise ParameterError(f"Caixas com extensão não positiva: {boxA}, {boxB}")

    altura = max(0.0, min(ra + ha, rb + hb) - max(ra, rb))
    largura = max(0.0, min(ca + wa, cb + wb) - max(ca, cb))
    intersecao = altura * largura
    uniao = ha * wa + hb * wb - intersecao
    return float(min(1.0, max(0.0, intersecao / uniao)))


class MetricsCalculator:
    """
    Métricas de sobreposição por sequência: AO, SR@0.5, SR@0.75 e a área sob
    a curva de sucesso (média das taxas em limiares igualmente espaçados).
    """

    def __init__(self, limiares_auc: int = LIMIARES_AUC):
        if limiares_auc < 2:
            raise ParameterError("A curva de sucesso precisa de pelo menos 2 limiares.")
        self.limiares = np.linspace(0.0, 1.0, limiares_auc)

    @staticmethod
    def taxa_sucesso(sobreposicoes: np.ndarray, limiar: float) -> float:
        if sobreposicoes.size == 0:
            return 0.0
        return float(np.mean(sobreposicoes > limiar))

    def calcular_metricas(self, sobreposicoes: Sequence[float]) -> Dict[str, float]:
        valores = np.asarray(sobreposicoes, dtype=np.float64)
        if valores.size == 0:
            logger.warning("Nenhuma sobreposição para avaliar; métricas zeradas.")
            return {"ao": 0.0, "sr_050": 0.0, "sr_075": 0.0, "auc": 0.0}
        if np.any(valores < 0) or np.any(valores > 1):
            raise ParameterError("Sobreposições devem estar em [0,1].")

        return {
            "ao": float(valores.mean()),
            "sr_050": self.taxa_sucesso(valores, 0.5),
            "sr_075": self.taxa_sucesso(valores, 0.75),
            "auc": float(np.mean([self.taxa_sucesso(valores, t) for t in self.limiares])),
        }
