"""
日誌配置模組

structlog 結構化日誌。數值事件以鍵值對記錄（iterations=、residual=、delta=），
numpy 純量與陣列在渲染前轉為 JSON 可序列化的值；執行上下文（名稱、種類、種子）
以 contextvars 綁定到同一執行中的所有事件。
"""

import logging
import logging.handlers
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, MutableMapping, Optional

import numpy as np
import structlog
from structlog.stdlib import LoggerFactory

# 陣列在日誌中只保留摘要
_ARRAY_SUMMARY_LIMIT = 8

_QUIET_LOGGERS = ("joblib",)


def _level(name: Any) -> int:
    return int(getattr(logging, str(name).upper()))


def _numeric_value(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size <= _ARRAY_SUMMARY_LIMIT:
            return value.tolist()
        if value.dtype.kind not in "fiu":
            return {"shape": list(value.shape), "dtype": str(value.dtype)}
        finite = value[np.isfinite(value)]
        return {
            "shape": list(value.shape),
            "min": float(np.min(finite)) if finite.size else None,
            "max": float(np.max(finite)) if finite.size else None,
        }
    return value


def numeric_values(
    logger: Any, method_name: str, event_dict: MutableMapping[str, Any]
) -> MutableMapping[str, Any]:
    """numpy 純量轉為 Python 數值，大陣列轉為 shape/min/max 摘要"""
    for key, value in list(event_dict.items()):
        if isinstance(value, (list, tuple)):
            event_dict[key] = [_numeric_value(v) for v in value]
        else:
            event_dict[key] = _numeric_value(value)
    return event_dict


def setup_logging(
    level: str = "INFO",
    format_type: str = "json",
    handlers_config: Optional[List[Dict[str, Any]]] = None,
) -> None:
    """
    設置結構化日誌

    Args:
        level: 根日誌級別
        format_type: json 或 console
        handlers_config: 處理器配置列表（預設為 stderr console）
    """
    renderer = (
        structlog.processors.JSONRenderer()
        if format_type == "json"
        else structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            numeric_values,
            renderer,
        ],
        context_class=dict,
        logger_factory=LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=_level(level))
    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.setLevel(_level(level))
    for handler_config in handlers_config or [{"type": "console", "level": level}]:
        root_logger.addHandler(create_handler(handler_config, format_type))

    for name in _QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def _console_handler(config: Dict[str, Any]) -> logging.Handler:
    # stdout 保留給 CLI 的表格與 JSON 輸出
    return logging.StreamHandler(sys.stderr)


def _file_handler(config: Dict[str, Any]) -> logging.Handler:
    log_file = Path(config.get("filename", "logs/kelab.log"))
    log_file.parent.mkdir(parents=True, exist_ok=True)
    return logging.handlers.RotatingFileHandler(
        filename=log_file,
        maxBytes=config.get("max_bytes", 10 * 1024 * 1024),
        backupCount=config.get("backup_count", 5),
        encoding="utf-8",
    )


def _syslog_handler(config: Dict[str, Any]) -> logging.Handler:
    return logging.handlers.SysLogHandler()


_HANDLER_FACTORIES: Dict[str, Callable[[Dict[str, Any]], logging.Handler]] = {
    "console": _console_handler,
    "file": _file_handler,
    "syslog": _syslog_handler,
}


def create_handler(
    config: Dict[str, Any], format_type: str = "json"
) -> logging.Handler:
    """
    根據配置創建日誌處理器

    Args:
        config: {"type": console|file|syslog, "level": ..., 其他處理器參數}
        format_type: json 時只輸出訊息本身（已由 structlog 渲染）

    Returns:
        logging.Handler: 未知類型時退回 stderr console
    """
    handler_type = config.get("type", "console")
    factory = _HANDLER_FACTORIES.get(handler_type)
    if factory is None:
        logging.getLogger(__name__).warning(
            "Unknown log handler type %r, using console", handler_type
        )
        factory = _console_handler
    handler = factory(config)
    handler.setLevel(_level(config.get("level", "INFO")))
    handler.setFormatter(
        logging.Formatter(
            "%(message)s"
            if format_type == "json"
            else "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        )
    )
    return handler


@contextmanager
def run_context(**values: Any) -> Iterator[None]:
    """在 with 區塊內把 values 綁定到所有日誌事件"""
    with structlog.contextvars.bound_contextvars(**values):
        yield


def get_logger(name: Optional[str] = None) -> Any:
    """
    獲取結構化日誌記錄器

    Returns:
        structlog.BoundLogger: 以 name 命名的記錄器
    """
    return structlog.get_logger(name)
