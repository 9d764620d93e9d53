"""
Gerador determinístico de sequências de características sintéticas.

As características são geradas diretamente no espaço de embeddings (sem
imagens): fundo estático, alvo com deriva de aparência, distratores com
similaridade cosseno controlada, janelas de oclusão e ruído por célula.
Toda a aleatoriedade vem de geradores Philox (baseados em contador)
indexados por (semente, fluxo, quadro), então cada quadro pode ser gerado
isoladamente e a sequência é reproduzível bit a bit.
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config_file import carregar_modelo, escrever_chave_valor, formatar_valor
from errors import ConfigError, ParameterError
from tensor_core import FeatureMap

logger = logging.getLogger(__name__)

# Fluxos independentes do gerador Philox
FLUXO_ASSINATURAS = 1
FLUXO_FUNDO = 2
FLUXO_RUIDO = 3
FLUXO_MOVIMENTO = 16  # + índice do objeto (0 = alvo, k+1 = distrator k)

MAGIC_SEQUENCIA = b"TCTS"
FORMATO_SEQUENCIA = "<4sIIIII"
FORMATO_QUADRO = "<iiB"

Movimento = Literal["static", "linear", "sinusoidal", "random_walk"]


def _separar_virgulas(valor: Any) -> Any:
    if isinstance(valor, str):
        partes = [p.strip() for p in valor.split(",")]
        return [p for p in partes if p]
    return valor


class _Trajetoria(BaseModel):
    """Campos de movimento comuns ao alvo e aos distratores."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    motion: Movimento = "linear"
    start: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    amplitude: Tuple[float, float] = (0.0, 0.0)
    period: float = Field(default=40.0, gt=0)
    walk_sigma: float = Field(default=0.0, ge=0)

    @field_validator("start", "velocity", "amplitude", mode="before")
    @classmethod
    def _par(cls, valor):
        return _separar_virgulas(valor)


class DistractorSpec(_Trajetoria):
    similarity: float = Field(ge=0.0, le=1.0)


class SceneSpec(_Trajetoria):
    seed: int = Field(default=0, ge=0, lt=2**64)
    frames: int = Field(default=100, ge=1)
    height: int = Field(default=12, ge=1)
    width: int = Field(default=12, ge=1)
    channels: int = Field(default=32, ge=2)
    target_radius: int = Field(default=1, ge=0)
    signature: Optional[Tuple[float, ...]] = None
    background: float = Field(default=0.5, ge=0)
    noise: float = Field(default=0.0, ge=0)
    drift: float = Field(default=0.0, ge=0)
    occlusions: Tuple[Tuple[int, int], ...] = ()
    distractors: Tuple[DistractorSpec, ...] = ()

    @field_validator("signature", mode="before")
    @classmethod
    def _assinatura(cls, valor):
        return _separar_virgulas(valor)

    @field_validator("occlusions", mode="before")
    @classmethod
    def _janelas(cls, valor):
        # "20-24, 60-64" -> ((20, 24), (60, 64)), intervalos inclusivos
        if isinstance(valor, str):
            janelas = []
            for trecho in _separar_virgulas(valor):
                inicio, _, fim = trecho.partition("-")
                janelas.append((inicio.strip(), (fim or inicio).strip()))
            return janelas
        return valor

    @field_validator("distractors", mode="before")
    @classmethod
    def _distratores(cls, valor):
        if isinstance(valor, dict):
            try:
                chaves = sorted(valor, key=int)
            except ValueError:
                raise ValueError("índices de distratores devem ser inteiros")
            return [valor[k] for k in chaves]
        return valor

    @model_validator(mode="after")
    def _coerencia(self):
        lado = 2 * self.target_radius + 1
        if lado > self.height or lado > self.width:
            raise ValueError(f"alvo {lado}x{lado} não cabe na grade {self.height}x{self.width}")
        if self.signature is not None:
            if len(self.signature) != self.channels:
                raise ValueError(
                    f"assinatura com {len(self.signature)} valores para {self.channels} canais"
                )
            if not any(abs(v) > 0 for v in self.signature):
                raise ValueError("assinatura nula")
        for inicio, fim in self.occlusions:
            if not 0 <= inicio <= fim < self.frames:
                raise ValueError(f"janela de oclusão {inicio}-{fim} fora de [0, {self.frames - 1}]")
        return self


@dataclass(frozen=True, eq=False)
class SyntheticFrame:
    feature: FeatureMap
    center: Tuple[int, int]
    visible: bool
    radius: int

    @property
    def size(self) -> Tuple[int, int]:
        lado = 2 * self.radius + 1
        return (lado, lado)

    @property
    def box(self) -> Tuple[int, int, int, int]:
        lado = 2 * self.radius + 1
        return (self.center[0] - self.radius, self.center[1] - self.radius, lado, lado)


@dataclass(frozen=True, eq=False)
class SceneSignatures:
    target: np.ndarray
    drift: np.ndarray
    occluder: np.ndarray
    distractors: Tuple[np.ndarray, ...]


def _gerador(seed: int, fluxo: int, quadro: int = 0) -> np.random.Generator:
    """
    Philox com chave (semente, fluxo) e o quadro na palavra alta do contador:
    sorteios de quadros diferentes nunca se sobrepõem.
    """
    chave = np.array([seed, fluxo], dtype=np.uint64)
    contador = np.array([0, 0, 0, quadro], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=contador, key=chave))


def _unitario(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _ortogonal(rng: np.random.Generator, base: np.ndarray) -> np.ndarray:
    """Vetor unitário aleatório ortogonal a `base` (Gram-Schmidt)."""
    while True:
        v = rng.standard_normal(base.shape[0])
        v = v - np.dot(v, base) * base
        norma = np.linalg.norm(v)
        if norma > 1e-8:
            return v / norma


def build_signatures(spec: SceneSpec) -> SceneSignatures:
    rng = _gerador(spec.seed, FLUXO_ASSINATURAS)
    sorteada = rng.standard_normal(spec.channels)
    alvo = _unitario(np.asarray(spec.signature if spec.signature else sorteada, dtype=np.float64))

    deriva = _ortogonal(rng, alvo)
    oclusor = _ortogonal(rng, alvo)
    distratores = []
    for d in spec.distractors:
        v = _ortogonal(rng, alvo)
        distratores.append(d.similarity * alvo + math.sqrt(1.0 - d.similarity**2) * v)
    return SceneSignatures(alvo, deriva, oclusor, tuple(distratores))


def _trajetoria(
    mov: _Trajetoria, spec: SceneSpec, indice: int, nome: str
) -> np.ndarray:
    """Centros inteiros (quadros × 2) de um objeto."""
    t = np.arange(spec.frames, dtype=np.float64)[:, None]
    inicio = np.asarray(mov.start, dtype=np.float64)
    r = spec.target_radius
    minimo = np.array([r, r], dtype=np.float64)
    maximo = np.array([spec.height - 1 - r, spec.width - 1 - r], dtype=np.float64)

    if mov.motion == "static":
        pos = np.repeat(inicio[None, :], spec.frames, axis=0)
    elif mov.motion == "linear":
        pos = inicio + t * np.asarray(mov.velocity)
    elif mov.motion == "sinusoidal":
        pos = (
            inicio
            + t * np.asarray(mov.velocity)
            + np.sin(2.0 * np.pi * t / mov.period) * np.asarray(mov.amplitude)
        )
    else:
        passos = _gerador(spec.seed, FLUXO_MOVIMENTO + indice).normal(
            0.0, mov.walk_sigma, size=(spec.frames, 2)
        )
        passos[0] = 0.0
        pos = np.empty((spec.frames, 2))
        atual = np.clip(inicio, minimo, maximo)
        for k in range(spec.frames):
            atual = atual + passos[k]
            # Reflete nas bordas para permanecer na grade
            for eixo in range(2):
                lo, hi = minimo[eixo], maximo[eixo]
                while atual[eixo] < lo or atual[eixo] > hi:
                    if hi <= lo:
                        atual[eixo] = lo
                    elif atual[eixo] < lo:
                        atual[eixo] = 2 * lo - atual[eixo]
                    else:
                        atual[eixo] = 2 * hi - atual[eixo]
            pos[k] = atual

    centros = np.rint(pos).astype(int)
    fora = np.any((centros < minimo) | (centros > maximo), axis=1)
    if np.any(fora):
        quadro = int(np.argmax(fora))
        raise ParameterError(
            f"Trajetória de {nome} sai da grade no quadro {quadro}: {tuple(centros[quadro])}"
        )
    return centros


def _pintar(dados: np.ndarray, centro, raio: int, assinatura: np.ndarray) -> None:
    linha, coluna = centro
    dados[:, linha - raio : linha + raio + 1, coluna - raio : coluna + raio + 1] = assinatura[
        :, None, None
    ]


def _ocluido(spec: SceneSpec, quadro: int) -> bool:
    return any(inicio <= quadro <= fim for inicio, fim in spec.occlusions)


def generate(spec: SceneSpec) -> List[SyntheticFrame]:
    """
    Gera a sequência completa. Quadro t: fundo, distratores, alvo com
    normalize(assinatura + t·δ·direção) (ou o oclusor, se ocluído) e ruído.
    """
    assinaturas = build_signatures(spec)
    trajeto_alvo = _trajetoria(spec, spec, 0, "alvo")
    trajetos = [
        _trajetoria(d, spec, k + 1, f"distrator {k}") for k, d in enumerate(spec.distractors)
    ]

    forma = (spec.channels, spec.height, spec.width)
    fundo = _gerador(spec.seed, FLUXO_FUNDO).standard_normal(forma)
    fundo *= spec.background / math.sqrt(spec.channels)
    desvio_ruido = spec.noise / math.sqrt(spec.channels)

    quadros = []
    for t in range(spec.frames):
        dados = fundo.copy()
        for assinatura, trajeto in zip(assinaturas.distractors, trajetos):
            _pintar(dados, trajeto[t], spec.target_radius, assinatura)

        visivel = not _ocluido(spec, t)
        if visivel:
            passo = t * spec.drift
            aparencia = (
                assinaturas.target
                if passo == 0
                else _unitario(assinaturas.target + passo * assinaturas.drift)
            )
            _pintar(dados, trajeto_alvo[t], spec.target_radius, aparencia)
        else:
            _pintar(dados, trajeto_alvo[t], spec.target_radius, assinaturas.occluder)

        if desvio_ruido > 0:
            dados += _gerador(spec.seed, FLUXO_RUIDO, t).standard_normal(forma) * desvio_ruido

        centro = (int(trajeto_alvo[t][0]), int(trajeto_alvo[t][1]))
        quadros.append(SyntheticFrame(FeatureMap(dados), centro, visivel, spec.target_radius))

    logger.debug(
        f"Cena seed={spec.seed}: {spec.frames} quadros {spec.channels}x{spec.height}x{spec.width}, "
        f"{len(spec.distractors)} distratores, {len(spec.occlusions)} oclusões"
    )
    return quadros


def load_scene(caminho: Union[str, Path], seed: Optional[int] = None) -> SceneSpec:
    sobrescritas = {"seed": seed} if seed is not None else None
    return carregar_modelo(SceneSpec, caminho, sobrescritas)


def scene_to_pairs(spec: SceneSpec) -> Dict[str, str]:
    pares: Dict[str, str] = {}
    for campo, valor in spec.model_dump(exclude={"distractors", "occlusions"}).items():
        if valor is not None:
            pares[campo] = formatar_valor(valor)
    if spec.occlusions:
        pares["occlusions"] = ", ".join(f"{a}-{b}" for a, b in spec.occlusions)
    for k, d in enumerate(spec.distractors):
        for campo, valor in d.model_dump().items():
            pares[f"distractors.{k}.{campo}"] = formatar_valor(valor)
    return pares


def save_scene(spec: SceneSpec, caminho: Union[str, Path]) -> None:
    escrever_chave_valor(scene_to_pairs(spec), caminho)


def export_sequence(quadros: List[SyntheticFrame], caminho: Union[str, Path]) -> None:
    """Binário plano little-endian: cabeçalho, depois (linha, coluna, visível, dados) por quadro."""
    if not quadros:
        raise ParameterError("Sequência vazia.")
    c, h, w = quadros[0].feature.shape
    with open(caminho, "wb") as f:
        f.write(struct.pack(FORMATO_SEQUENCIA, MAGIC_SEQUENCIA, len(quadros), c, h, w, quadros[0].radius))
        for q in quadros:
            f.write(struct.pack(FORMATO_QUADRO, q.center[0], q.center[1], int(q.visible)))
            f.write(q.feature.data.astype("<f8").tobytes())


def load_sequence(caminho: Union[str, Path]) -> List[SyntheticFrame]:
    with open(caminho, "rb") as f:
        bruto = f.read()
    tamanho = struct.calcsize(FORMATO_SEQUENCIA)
    if len(bruto) < tamanho:
        raise ConfigError("sequência truncada", str(caminho))
    magic, n, c, h, w, raio = struct.unpack(FORMATO_SEQUENCIA, bruto[:tamanho])
    if magic != MAGIC_SEQUENCIA:
        raise ConfigError(f"magic inválido {magic!r}", str(caminho))

    passo_cabecalho = struct.calcsize(FORMATO_QUADRO)
    passo_dados = 8 * c * h * w
    if len(bruto) != tamanho + n * (passo_cabecalho + passo_dados):
        raise ConfigError("tamanho da sequência não confere com o cabeçalho", str(caminho))

    quadros, pos = [], tamanho
    for _ in range(n):
        linha, coluna, visivel = struct.unpack(FORMATO_QUADRO, bruto[pos : pos + passo_cabecalho])
        pos += passo_cabecalho
        dados = np.frombuffer(bruto[pos : pos + passo_dados], dtype="<f8").reshape(c, h, w)
        pos += passo_dados
        quadros.append(SyntheticFrame(FeatureMap(dados), (linha, coluna), bool(visivel), raio))
    return quadros


def clean_scene(seed: int = 0, frames: int = 100) -> SceneSpec:
    """Cena sem ruído, distratores nem deriva."""
    return SceneSpec(
        seed=seed,
        frames=frames,
        height=10,
        width=10,
        channels=16,
        target_radius=1,
        background=0.5,
        motion="sinusoidal",
        start=(5.0, 4.0),
        amplitude=(2.0, -2.0),
        period=50.0,
    )


def benchmark_suite(n_scenes: int = 20, seed: int = 2020, frames: int = 60) -> List[SceneSpec]:
    """
    Suíte fixa com distratores (ρ em [0.7, 0.95]), deriva de 0.02 por quadro,
    janelas de oclusão e ruído 0.3.
    """
    rng = np.random.default_rng(seed)
    cenas = []
    for indice in range(n_scenes):
        distratores = (
            DistractorSpec(
                similarity=float(rng.uniform(0.7, 0.95)),
                motion="sinusoidal",
                start=(float(rng.integers(3, 9)), float(rng.integers(3, 9))),
                amplitude=(float(rng.uniform(-2.0, 2.0)), float(rng.uniform(-2.0, 2.0))),
                period=float(rng.uniform(20.0, 50.0)),
            ),
            DistractorSpec(
                similarity=float(rng.uniform(0.7, 0.95)),
                motion="random_walk",
                start=(float(rng.integers(2, 10)), float(rng.integers(2, 10))),
                walk_sigma=0.5,
            ),
        )
        janelas = []
        inicio = int(rng.integers(12, 22))
        while inicio + 8 < frames:
            duracao = int(rng.integers(5, 9))
            janelas.append((inicio, inicio + duracao - 1))
            inicio += duracao + int(rng.integers(12, 22))

        cenas.append(
            SceneSpec(
                seed=seed * 1000 + indice,
                frames=frames,
                height=12,
                width=12,
                channels=32,
                target_radius=1,
                background=0.5,
                noise=0.3,
                drift=0.02,
                motion="sinusoidal",
                start=(5.5 + rng.uniform(-0.5, 0.5), 5.5 + rng.uniform(-0.5, 0.5)),
                amplitude=(float(rng.uniform(-3.0, 3.0)), float(rng.uniform(-3.0, 3.0))),
                period=float(rng.uniform(30.0, 60.0)),
                occlusions=tuple(janelas),
                distractors=distratores,
            )
        )
    return cenas
