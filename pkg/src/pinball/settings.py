"""設定の読み込み

パッケージ同梱の conf/default.yaml を基本とし、
PINBALL_CONFIG で指定した YAML と ``key=value`` 形式の上書きを順にマージする。
"""
import os
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from omegaconf import DictConfig, OmegaConf

ENV_CONFIG = "PINBALL_CONFIG"

_current: Optional[DictConfig] = None


def _default_yaml() -> str:
    return resources.files("pinball").joinpath("conf/default.yaml").read_text(encoding="utf-8")


def load_settings(
    overrides: Sequence[str] = (),
    config_path: Optional[Union[str, Path]] = None,
) -> DictConfig:
    """デフォルト設定に追加ファイルと上書きをマージして返す"""
    layers = [OmegaConf.create(_default_yaml())]

    path = config_path or os.environ.get(ENV_CONFIG)
    if path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"設定ファイルが見つかりません: {path}")
        layers.append(OmegaConf.load(path))

    if overrides:
        layers.append(OmegaConf.from_dotlist(list(overrides)))

    cfg = OmegaConf.merge(*layers)
    OmegaConf.set_readonly(cfg, True)
    return cfg


def get_settings() -> DictConfig:
    global _current
    if _current is None:
        _current = load_settings()
    return _current


def configure(
    overrides: Sequence[str] = (),
    config_path: Optional[Union[str, Path]] = None,
) -> DictConfig:
    """プロセス全体の設定を置き換える（CLI の起動時に一度だけ呼ぶ）"""
    global _current
    _current = load_settings(overrides, config_path)
    return _current


def reset() -> None:
    global _current
    _current = None
