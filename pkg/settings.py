import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

from errors import ConfigError

NIVEIS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Settings:
    threads: int = 1
    log_level: str = "INFO"

    @property
    def nivel_logging(self) -> int:
        return getattr(logging, self.log_level)


def carregar_configuracoes() -> Settings:
    """
    Lê TCT_THREADS e TCT_LOG_LEVEL do ambiente (ou de um .env).
    """
    load_dotenv()

    bruto = os.getenv("TCT_THREADS", "1")
    try:
        threads = int(bruto)
    except ValueError:
        raise ConfigError(f"TCT_THREADS inválido: {bruto!r}")
    if threads < 1:
        raise ConfigError(f"TCT_THREADS deve ser >= 1, recebido {threads}")

    nivel = os.getenv("TCT_LOG_LEVEL", "INFO").upper()
    if nivel not in NIVEIS:
        raise ConfigError(f"TCT_LOG_LEVEL inválido: {nivel!r}")
    return Settings(threads=threads, log_level=nivel)
