import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Type, TypeVar, Union

from dotenv.parser import Binding, parse_stream
from pydantic import BaseModel, ValidationError

from errors import ConfigError

logger = logging.getLogger(__name__)

Modelo = TypeVar("Modelo", bound=BaseModel)


@dataclass(frozen=True)
class Entrada:
    valor: str
    linha: int


def _linha_da_ligacao(ligacao: Binding) -> int:
    # O trecho original inclui as linhas em branco que antecedem a chave
    texto = ligacao.original.string
    recuo = len(texto) - len(texto.lstrip())
    return ligacao.original.line + texto[:recuo].count("\n")


def ler_chave_valor(caminho: Union[str, Path]) -> Dict[str, Entrada]:
    """
    Lê um arquivo `chave = valor` com o parser do python-dotenv. Linhas vazias
    e comentários (#) são ignorados; linha sem '=' ou chave repetida é erro
    com número da linha.
    """
    caminho = Path(caminho)
    if not caminho.is_file():
        raise ConfigError("arquivo não encontrado", str(caminho))

    entradas: Dict[str, Entrada] = {}
    with open(caminho, "r", encoding="utf-8") as f:
        for ligacao in parse_stream(f):
            numero = _linha_da_ligacao(ligacao)
            if ligacao.error:
                raise ConfigError(
                    f"linha inválida: {ligacao.original.string.strip()!r}", str(caminho), numero
                )
            chave = ligacao.key
            if chave is None:
                continue
            if ligacao.value is None:
                raise ConfigError(f"linha sem '=': {chave!r}", str(caminho), numero)
            if chave in entradas:
                raise ConfigError(
                    f"chave '{chave}' repetida (primeira na linha {entradas[chave].linha})",
                    str(caminho),
                    numero,
                )
            entradas[chave] = Entrada(ligacao.value, numero)
    return entradas


def _aninhar(entradas: Dict[str, Entrada], arquivo: Optional[str] = None) -> Dict[str, Any]:
    """'distractors.0.similarity' -> {'distractors': {'0': {'similarity': ...}}}"""
    dados: Dict[str, Any] = {}
    for chave, entrada in entradas.items():
        partes = chave.split(".")
        alvo = dados
        for parte in partes[:-1]:
            alvo = alvo.setdefault(parte, {})
            if not isinstance(alvo, dict):
                raise ConfigError(
                    f"chave '{chave}' conflita com o valor simples '{parte}'", arquivo, entrada.linha
                )
        if isinstance(alvo.get(partes[-1]), dict):
            raise ConfigError(
                f"chave '{chave}' conflita com chaves aninhadas", arquivo, entrada.linha
            )
        alvo[partes[-1]] = entrada.valor
    return dados


def _linha_da_chave(entradas: Dict[str, Entrada], loc: Sequence[Any]) -> Optional[int]:
    # Procura a chave mais específica que corresponde à localização do erro
    for tamanho in range(len(loc), 0, -1):
        chave = ".".join(str(p) for p in loc[:tamanho])
        if chave in entradas:
            return entradas[chave].linha
        prefixo = chave + "."
        linhas = [e.linha for k, e in entradas.items() if k.startswith(prefixo)]
        if linhas:
            return min(linhas)
    return None


def validar(
    modelo: Type[Modelo],
    entradas: Dict[str, Entrada],
    arquivo: Optional[str] = None,
    sobrescritas: Optional[Dict[str, Any]] = None,
) -> Modelo:
    dados = _aninhar(entradas, arquivo)
    dados.update(sobrescritas or {})
    try:
        return modelo.model_validate(dados)
    except ValidationError as e:
        erro = e.errors()[0]
        localizacao = ".".join(str(p) for p in erro["loc"]) or "(raiz)"
        raise ConfigError(
            f"{localizacao}: {erro['msg']}", arquivo, _linha_da_chave(entradas, erro["loc"])
        ) from e


def carregar_modelo(
    modelo: Type[Modelo],
    caminho: Union[str, Path],
    sobrescritas: Optional[Dict[str, Any]] = None,
) -> Modelo:
    entradas = ler_chave_valor(caminho)
    objeto = validar(modelo, entradas, str(caminho), sobrescritas)
    logger.info(f"Configuração {modelo.__name__} carregada de {caminho}")
    return objeto


def formatar_valor(valor: Any) -> str:
    if isinstance(valor, bool):
        return "true" if valor else "false"
    if isinstance(valor, (tuple, list)):
        return ", ".join(formatar_valor(v) for v in valor)
    return str(valor)


def escrever_chave_valor(pares: Dict[str, Any], caminho: Union[str, Path]) -> None:
    with open(caminho, "w", encoding="utf-8") as f:
        for chave, valor in pares.items():
            f.write(f"{chave} = {formatar_valor(valor)}\n")
