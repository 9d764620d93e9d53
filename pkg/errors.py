from typing import Optional


class TrackerError(Exception):
    """Base de todos os erros levantados pelo rastreador."""


class DimensionError(TrackerError, ValueError):
    """Dimensões incompatíveis entre tensores, projeções ou núcleos."""


class ParameterError(TrackerError, ValueError):
    """Parâmetro fora do domínio permitido (sigma, lambda, tamanhos...)."""


class EmptyEnsemble(TrackerError, ValueError):
    """Conjunto de templates vazio."""


class OutOfBounds(TrackerError, ValueError):
    """Caixa ou trajetória fora da grade."""


class ConfigError(TrackerError):
    """
    Erro de leitura/validação de arquivo de configuração.
    Guarda o arquivo e a linha para que a CLI mostre `arquivo:linha`.
    """

    def __init__(
        self, mensagem: str, arquivo: Optional[str] = None, linha: Optional[int] = None
    ):
        self.mensagem = mensagem
        self.arquivo = arquivo
        self.linha = linha
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.arquivo and self.linha:
            return f"{self.arquivo}:{self.linha}: {self.mensagem}"
        if self.arquivo:
            return f"{self.arquivo}: {self.mensagem}"
        return self.mensagem
