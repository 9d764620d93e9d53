import logging
from dataclasses import dataclass, replace
from typing import List, Tuple

from errors import DimensionError, ParameterError
from tensor_core import FeatureMap, MaskVector

logger = logging.getLogger(__name__)

TAMANHO_MAXIMO_PADRAO = 20
INTERVALO_PADRAO = 5


@dataclass(frozen=True, eq=False)
class TemplateEnsemble:
    """
    Conjunto ordenado de templates (o mais antigo primeiro) e suas máscaras.
    Cada atualização devolve um novo conjunto; o estado é função pura da
    sequência de atualizações.
    """

    templates: Tuple[FeatureMap, ...]
    masks: Tuple[MaskVector, ...]
    max_size: int = TAMANHO_MAXIMO_PADRAO
    interval: int = INTERVALO_PADRAO
    frames_since_update: int = 0
    pin_first: bool = False
    update_count: int = 0

    def __post_init__(self):
        if self.max_size < 1 or self.interval < 1:
            raise ParameterError(
                f"max_size e interval devem ser >= 1 (recebidos {self.max_size}, {self.interval})"
            )
        if len(self.templates) != len(self.masks):
            raise DimensionError("Número de templates e de máscaras diverge.")
        if len(self.templates) > self.max_size:
            raise ParameterError(f"{len(self.templates)} templates excedem max_size={self.max_size}")

    @classmethod
    def init(
        cls,
        first_template: FeatureMap,
        first_mask: MaskVector,
        max_size: int = TAMANHO_MAXIMO_PADRAO,
        interval: int = INTERVALO_PADRAO,
        pin_first: bool = False,
    ) -> "TemplateEnsemble":
        cls._verificar_mascara(first_template, first_mask)
        return cls(
            templates=(first_template,),
            masks=(first_mask,),
            max_size=max_size,
            interval=interval,
            pin_first=pin_first,
        )

    @staticmethod
    def _verificar_mascara(template: FeatureMap, mask: MaskVector) -> None:
        if mask.length != template.height * template.width:
            raise DimensionError(
                f"Máscara com {mask.length} valores para template "
                f"{template.height}x{template.width}."
            )

    def __len__(self) -> int:
        return len(self.templates)

    @property
    def shape(self):
        return self.templates[0].shape

    def mask_ensemble(self) -> MaskVector:
        """Máscaras concatenadas na mesma ordem dos templates (M′)."""
        return MaskVector.concat(self.masks)

    def maybe_update(
        self, template: FeatureMap, mask: MaskVector, frame_index: int
    ) -> Tuple["TemplateEnsemble", bool]:
        """
        Acrescenta o template quando frame_index > 0 e é múltiplo do intervalo.
        Cheio, descarta o mais antigo (ou o segundo mais antigo com pin_first).
        """
        if template.shape != self.shape:
            raise DimensionError(f"Template {template.shape} difere do conjunto {self.shape}.")
        self._verificar_mascara(template, mask)

        if frame_index <= 0 or frame_index % self.interval != 0:
            return replace(self, frames_since_update=self.frames_since_update + 1), False

        templates: List[FeatureMap] = list(self.templates) + [template]
        mascaras: List[MaskVector] = list(self.masks) + [mask]
        if len(templates) > self.max_size:
            descarte = 1 if (self.pin_first and self.max_size >= 2) else 0
            del templates[descarte]
            del mascaras[descarte]
            logger.debug(f"Quadro {frame_index}: template {descarte} descartado.")

        atualizado = replace(
            self,
            templates=tuple(templates),
            masks=tuple(mascaras),
            frames_since_update=0,
            update_count=self.update_count + 1,
        )
        return atualizado, True


@dataclass
class ConfidenceGate:
    """
    Bloqueia a atualização quando o pico da resposta fica abaixo de
    `threshold` vezes a média dos picos observados. Desligado por padrão.
    """

    enabled: bool = False
    threshold: float = 0.25
    soma: float = 0.0
    contagem: int = 0

    @property
    def media(self) -> float:
        return self.soma / self.contagem if self.contagem else 0.0

    def permite(self, pico: float) -> bool:
        if not self.enabled:
            return True
        permitido = self.contagem == 0 or pico >= self.threshold * self.media
        self.soma += float(pico)
        self.contagem += 1
        if not permitido:
            logger.info(f"Atualização bloqueada: pico {pico:.4f} abaixo do limiar.")
        return permitido
