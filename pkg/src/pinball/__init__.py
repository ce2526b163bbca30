"""Manhattan pinball の鏡モデル

配置の生成、光線の追跡、パターンによる強化、閉路事象の判定、
モンテカルロ推定をまとめたパッケージ。
"""
__version__ = "0.1.0"

from .configuration import Configuration, changed_sites, hybrid, threshold, uniforms
from .enhancement import Pattern, enhance, load_pattern, match_pattern, search_patterns, validate_pattern
from .errors import (
    EscapeError,
    FitError,
    FormatError,
    InvalidArgumentError,
    PatternError,
    PinballError,
    ResourceLimitError,
    TracerInvariantError,
)
from .events import (
    EventResult,
    dual_crosscheck,
    radial_closed_path,
    rect_crossing,
    surrounding_circuit_4rect,
    surrounding_circuit_exact,
)
from .geometry import Direction, Orientation, Site
from .tracer import RayState, Trajectory, reverse, trace
