"""
Ponto de entrada: rastreamento de uma cena, ablação, varredura da memória,
geração da suíte e exportação de mapas de resposta.

Códigos de saída: 0 sucesso, 2 erro de configuração/argumentos, 3 erro de execução.
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import Dict, List, Optional

from config_file import validar
from errors import ConfigError, TrackerError
from result_writer import TIPOS_EXPORTACAO, ResultWriter
from settings import Settings, carregar_configuracoes
from synth_world import SceneSpec, benchmark_suite, generate, load_scene, save_scene
from track_harness import (
    TrackerConfig,
    default_modes,
    load_tracker_config,
    run_ablation,
    run_memory_sweep,
    track,
)

logger = logging.getLogger(__name__)

SAIDA_OK = 0
SAIDA_CONFIG = 2
SAIDA_EXECUCAO = 3

MODOS_CLI = {
    "off": "off",
    "encoder": "encoder_only",
    "mask": "mask_only",
    "feature": "feature_only",
    "full": "full",
}


def configurar_logging(diretorio: Path, nivel: int) -> None:
    diretorio.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=nivel,
        format="%(asctime)s [%(levelname)s] %(name)s %(message)s",
        handlers=[
            logging.FileHandler(diretorio / "run.log", mode="a"),
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )
    # Bibliotecas de terceiros só em WARNING
    logging.getLogger("numexpr").setLevel(logging.WARNING)
    logging.getLogger("dotenv").setLevel(logging.WARNING)


def _sobrescritas_rastreador(args: argparse.Namespace) -> Dict[str, object]:
    sobrescritas: Dict[str, object] = {}
    if getattr(args, "pipeline", None):
        sobrescritas["pipeline"] = args.pipeline
    if getattr(args, "mode", None):
        sobrescritas["transformer"] = MODOS_CLI[args.mode]
    exportar = getattr(args, "export", None) or []
    if "responses" in exportar:
        sobrescritas["keep_responses"] = True
    if "masks" in exportar:
        sobrescritas["keep_masks"] = True
    return sobrescritas


def _configuracao_rastreador(args: argparse.Namespace) -> TrackerConfig:
    sobrescritas = _sobrescritas_rastreador(args)
    if args.tracker:
        return load_tracker_config(args.tracker, sobrescritas)
    return validar(TrackerConfig, {}, None, sobrescritas)


def _arquivos_suite(diretorio: str) -> List[Path]:
    pasta = Path(diretorio)
    if not pasta.is_dir():
        raise ConfigError("diretório da suíte não encontrado", str(pasta))
    arquivos = sorted(pasta.glob("*.scene"))
    if not arquivos:
        raise ConfigError("suíte sem arquivos .scene", str(pasta))
    return arquivos


def _carregar_suite(diretorio: Optional[str], seed: Optional[int]) -> List[SceneSpec]:
    if diretorio is None:
        return benchmark_suite() if seed is None else benchmark_suite(seed=seed)
    return [load_scene(a) for a in _arquivos_suite(diretorio)]


def _validar_entradas(args: argparse.Namespace) -> None:
    """Confere os caminhos de entrada antes de criar o diretório de saída."""
    for opcao in ("scene", "tracker"):
        caminho = getattr(args, opcao, None)
        if caminho and not Path(caminho).is_file():
            raise ConfigError("arquivo não encontrado", str(caminho))
    if getattr(args, "suite", None):
        _arquivos_suite(args.suite)


def cmd_track(args: argparse.Namespace, settings: Settings) -> int:
    cena = load_scene(args.scene, args.seed)
    cfg = _configuracao_rastreador(args)
    escritor = ResultWriter(args.out)

    logger.info(f"Rastreando {args.scene} (seed={cena.seed}) com {cfg.label}")
    resultado = track(generate(cena), cfg)

    escritor.registrar_resultado(resultado.to_frame())
    escritor.registrar_resumo(
        resultado.summary(),
        {"scene": args.scene, "seed": cena.seed, "pipeline": cfg.pipeline, "transformer": cfg.transformer},
    )
    if resultado.responses is not None:
        escritor.registrar_mapas(resultado.responses, "responses")
    if resultado.masks is not None:
        escritor.registrar_mapas(resultado.masks, "masks")

    print("pipeline,transformer,ao,sr_050,sr_075,auc,encoder_calls")
    print(
        f"{cfg.pipeline},{cfg.transformer},{resultado.ao:.6f},{resultado.sr_050:.6f},"
        f"{resultado.sr_075:.6f},{resultado.auc:.6f},{resultado.encoder_calls}"
    )
    logger.info(f"AO={resultado.ao:.4f} SR@0.5={resultado.sr_050:.4f} ({resultado.fps:.1f} quadros/s)")
    return SAIDA_OK


def cmd_ablation(args: argparse.Namespace, settings: Settings) -> int:
    suite = _carregar_suite(args.suite, args.seed)
    base = _configuracao_rastreador(args)
    campos = base.model_dump(exclude={"pipeline", "transformer"})
    modos = default_modes(**campos)
    threads = args.threads or settings.threads

    tabela = run_ablation(suite, modos, threads)
    ResultWriter(args.out).registrar_tabela(tabela, "ablation.csv")
    print(tabela.to_csv(index=False, float_format="%.6f", lineterminator="\n"), end="")
    return SAIDA_OK


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    suite = _carregar_suite(args.suite, args.seed)
    base = _configuracao_rastreador(args)
    tabela = run_memory_sweep(
        suite, args.intervals, args.sizes, base, args.threads or settings.threads
    )
    ResultWriter(args.out).registrar_tabela(tabela, "sweep.csv")
    print(tabela.to_csv(index=False, float_format="%.6f", lineterminator="\n"), end="")
    return SAIDA_OK


def cmd_make_suite(args: argparse.Namespace, settings: Settings) -> int:
    pasta = Path(args.out)
    pasta.mkdir(parents=True, exist_ok=True)
    cenas = benchmark_suite(args.n) if args.seed is None else benchmark_suite(args.n, args.seed)
    for indice, cena in enumerate(cenas):
        save_scene(cena, pasta / f"scene_{indice:02d}.scene")
    logger.info(f"{len(cenas)} cenas escritas em {pasta}")
    return SAIDA_OK


def cmd_export_response(args: argparse.Namespace, settings: Settings) -> int:
    escritor = ResultWriter(args.run)
    total = escritor.exportar_mapas(args.kind)
    print(f"{args.kind},{total}")
    return SAIDA_OK


def _adicionar_rastreador(parser: argparse.ArgumentParser, modo: bool = True) -> None:
    parser.add_argument("--tracker", help="arquivo chave = valor com a TrackerConfig")
    parser.add_argument("--pipeline", choices=["siamese", "dcf"])
    if modo:
        parser.add_argument("--mode", choices=list(MODOS_CLI))
    parser.add_argument("--seed", type=int)


def criar_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tct", description="Rastreador com transformer temporal")
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("track", help="rastreia uma cena")
    p.add_argument("--scene", required=True)
    _adicionar_rastreador(p)
    p.add_argument("--out", required=True)
    p.add_argument("--export", nargs="*", choices=TIPOS_EXPORTACAO, default=[])
    p.set_defaults(funcao=cmd_track)

    p = sub.add_parser("ablation", help="tabela de ablação (2 pipelines × 5 modos)")
    p.add_argument("--suite", help="diretório com arquivos .scene (padrão: suíte embutida)")
    _adicionar_rastreador(p, modo=False)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(funcao=cmd_ablation)

    p = sub.add_parser("sweep", help="AO por intervalo de amostragem e tamanho do conjunto")
    p.add_argument("--suite")
    _adicionar_rastreador(p)
    p.add_argument("--intervals", type=int, nargs="+", default=[1, 5, 10])
    p.add_argument("--sizes", type=int, nargs="+", default=[1, 10, 20, 30])
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(funcao=cmd_sweep)

    p = sub.add_parser("make-suite", help="escreve a suíte de benchmark como arquivos .scene")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(funcao=cmd_make_suite)

    p = sub.add_parser("export-response", help="converte mapas salvos em PGM e CSV")
    p.add_argument("--run", required=True)
    p.add_argument("--kind", choices=TIPOS_EXPORTACAO, default="responses")
    p.set_defaults(funcao=cmd_export_response)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = criar_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return SAIDA_CONFIG if e.code not in (0, None) else SAIDA_OK

    try:
        settings = carregar_configuracoes()
        _validar_entradas(args)
    except ConfigError as e:
        print(f"erro de configuração: {e}", file=sys.stderr)
        return SAIDA_CONFIG

    saida = Path(args.run if args.comando == "export-response" else args.out)
    if args.comando == "export-response" and not saida.is_dir():
        print(f"erro: diretório de execução não encontrado: {saida}", file=sys.stderr)
        return SAIDA_EXECUCAO
    configurar_logging(saida, settings.nivel_logging)

    try:
        return args.funcao(args, settings)
    except ConfigError as e:
        logger.error(f"Erro de configuração: {e}")
        return SAIDA_CONFIG
    except (TrackerError, ValueError, OSError) as e:
        logger.error(f"Erro ao executar {args.comando}: {e}")
        logger.debug(traceback.format_exc())
        return SAIDA_EXECUCAO
    finally:
        logging.shutdown()


if __name__ == "__main__":
    sys.exit(main())
