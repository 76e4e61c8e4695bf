"""
CrowdChain Sim 统一 CLI 入口
运行场景、批量回归、安全博弈以及场景文件的列出与校验
"""
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click

from crowdchain_sim.config import config
from crowdchain_sim.core.exceptions import CrowdSimError
from crowdchain_sim.logger import logger, set_level
from crowdchain_sim.services import file_service, report_service
from crowdchain_sim.services.game_service import GAMES, run_game
from crowdchain_sim.services.scenario_service import load_scenario, run_scenario

EXIT_ASSERTION_FAILED = 1
EXIT_ERROR = 2


# 共享的运行选项
run_options = [
    click.option(
        '--seed', '-s',
        type=click.IntRange(0, 2 ** 64 - 1),
        default=None,
        help='覆盖场景文件中的种子'
    ),
    click.option(
        '--trace', '-t',
        'trace_path',
        type=click.Path(dir_okay=False, path_type=Path),
        help='轨迹文件输出路径（TSV）'
    ),
    click.option(
        '--json-report',
        'json_path',
        type=click.Path(dir_okay=False, path_type=Path),
        help='JSON 报告输出路径'
    ),
]


def add_options(options):
    """装饰器：添加选项到命令"""
    def _add_options(func):
        for option in reversed(options):
            func = option(func)
        return func
    return _add_options


def _output_path(path: Optional[Path]) -> Optional[Path]:
    """相对路径落在配置的输出目录下"""
    if path is None or path.is_absolute():
        return path
    return config.get_output_dir() / path


def _fail(error: Exception):
    click.echo(f"错误: {error}", err=True)
    sys.exit(EXIT_ERROR)


@click.group()
@click.option(
    '--config', '-c',
    'config_file',
    type=click.Path(exists=True, file_okay=True, dir_okay=False, path_type=str),
    help='配置文件路径（YAML 格式）'
)
@click.option(
    '--log-level',
    type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
    default=None,
    help='日志级别（默认读取配置）'
)
def cli(config_file, log_level):
    """去中心化众包协议仿真器命令行工具"""
    config.initialize(config_file=config_file, log_level=log_level)
    set_level(config.get_log_level())


@cli.command()
@click.argument('scenario')
@add_options(run_options)
@click.option(
    '--text-report',
    is_flag=True,
    help='在标准输出打印完整的文本报告'
)
def run(scenario, seed, trace_path, json_path, text_report):
    """
    运行单个场景

    SCENARIO 可以是场景文件路径，也可以是内置场景名。

    示例:
        \b
        # 运行内置场景
        crowdchain run majority_n3_honest

        \b
        # 指定种子并写出轨迹与 JSON 报告
        crowdchain run my_scenario.yaml --seed 7 --trace out.tsv --json-report out.json
    """
    try:
        cfg = load_scenario(scenario).with_seed(seed)
        report = run_scenario(cfg)
        report_service.write_outputs(report, trace_path=_output_path(trace_path), json_path=_output_path(json_path))
    except CrowdSimError as e:
        _fail(e)

    if text_report:
        click.echo(report_service.render_text(report), nl=False)
    else:
        click.echo(report_service.summary_line(report))
    if not report.passed:
        sys.exit(EXIT_ASSERTION_FAILED)


@cli.command()
@click.option(
    '--jobs', '-j',
    type=click.IntRange(1, 64),
    default=1,
    help='并行运行的场景数（默认: 1）'
)
@click.option(
    '--seed', '-s',
    type=click.IntRange(0, 2 ** 64 - 1),
    default=None,
    help='统一覆盖所有场景的种子'
)
def suite(jobs, seed):
    """
    运行全部内置场景

    每个场景输出一行结果，全部通过时退出码为 0。
    """
    try:
        configs = [load_scenario(item["path"]).with_seed(seed) for item in file_service.list_scenarios()]
    except CrowdSimError as e:
        _fail(e)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run_scenario, configs))
    else:
        reports = [run_scenario(cfg) for cfg in configs]

    for report in reports:
        click.echo(report_service.summary_line(report))
    failed = [r.scenario for r in reports if not r.passed]
    click.echo(f"{len(reports) - len(failed)}/{len(reports)} 个场景通过")
    if failed:
        sys.exit(EXIT_ASSERTION_FAILED)


@cli.command()
@click.argument('game', type=click.Choice(GAMES))
@click.option('--trials', '-n', type=int, default=1000, help='试验次数（默认: 1000）')
@click.option('--seed', '-s', type=click.IntRange(0, 2 ** 64 - 1), default=0, help='随机种子')
@click.option('--q', 'q', type=int, default=2, help='可链接性博弈中对手持有的证书数（默认: 2）')
def game(game, trials, seed, q):
    """
    运行安全博弈并输出经验胜率

    linkability 与 forgery 的胜率必须为 0，anonymity 的猜中率必须在 [0.45, 0.55] 内。
    """
    try:
        result = run_game(game, trials, seed, q)
    except CrowdSimError as e:
        _fail(e)

    status = "PASS" if result.passed else "FAIL"
    click.echo(
        f"{status}  {result.game} rate={result.rate:.4f} "
        f"({result.wins}/{result.trials}) band=[{result.lower}, {result.upper}]"
    )
    if not result.passed:
        sys.exit(EXIT_ASSERTION_FAILED)


@cli.command(name='list')
def list_command():
    """列出可用场景（用户场景目录优先）"""
    for item in file_service.list_scenarios():
        origin = "bundled" if item["bundled"] else "user"
        click.echo(f"{item['name']:<28} {origin:<8} {item['path']}")


@cli.command()
@click.argument('scenario')
@click.option(
    '--normalize',
    'normalize_path',
    type=click.Path(dir_okay=False, path_type=Path),
    help='把补全默认值后的配置写到该路径'
)
@click.option('--force', is_flag=True, help='允许覆盖已存在的文件')
def validate(scenario, normalize_path, force):
    """只解析并校验场景文件，不运行"""
    try:
        cfg = load_scenario(scenario)
        if normalize_path is not None:
            file_service.save_scenario_file(normalize_path, cfg.model_dump(mode="json"), overwrite=force)
            logger.info(f"规范化配置已写入 {normalize_path}")
    except (CrowdSimError, FileExistsError) as e:
        _fail(e)
    click.echo(f"OK  {cfg.scenario.name}")


def main():
    """主入口函数"""
    cli()


if __name__ == "__main__":
    main()
