"""pinball 全体で使う例外クラス"""
from pathlib import Path
from typing import Optional, Union


class PinballError(Exception):
    """pinball の例外の基底クラス"""


class InvalidArgumentError(PinballError, ValueError):
    """引数が前提条件を満たさない（範囲不足、確率の範囲外など）"""


class ResourceLimitError(PinballError):
    """密な配置フィールドがメモリ上限を超える"""


class FormatError(PinballError):
    """ファイル形式の解析エラー（行番号付き）"""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        path: Optional[Union[str, Path]] = None,
    ):
        self.message = message
        self.line = line
        self.path = str(path) if path is not None else None
        location = ""
        if self.path is not None:
            location += f"{self.path}"
        if line is not None:
            location += f":{line}"
        super().__init__(f"{location}: {message}" if location else message)


class EscapeError(PinballError):
    """光線が配置の範囲外に出た"""

    def __init__(self, state, message: Optional[str] = None):
        self.state = state
        super().__init__(message or f"範囲外へ脱出しました: {state}")


class TracerInvariantError(PinballError):
    """開始状態以外の状態が繰り返された（可逆性の破れ）"""


class PatternError(PinballError, ValueError):
    """パターン定義の不整合、または検証の失敗"""


class FitError(PinballError):
    """減衰フィットに使える点が足りない"""
