"""
Logging 模組的 smoke test

測試 Logging 模組的基本功能。
"""

import logging
from unittest.mock import patch

import pytest


def test_logging_module_import():
    """測試 Logging 模組可以正常導入"""
    try:
        from kelab.core import logging as kelab_logging

        assert kelab_logging is not None
    except ImportError as e:
        pytest.fail(f"Logging 模組導入失敗: {e}")


def test_get_logger_function():
    """測試 get_logger 函數"""
    from kelab.core.logging import get_logger

    logger = get_logger("test_logger")
    assert logger is not None
    # structlog 返回的是 BoundLoggerLazyProxy，不是標準的 logging.Logger
    assert hasattr(logger, "info")
    assert hasattr(logger, "error")
    assert hasattr(logger, "debug")


@patch("kelab.core.logging.logging.basicConfig")
def test_setup_logging_basic(mock_basic_config):
    """測試基本的 logging 設置"""
    from kelab.core.logging import setup_logging

    setup_logging(level="INFO", format_type="console")
    mock_basic_config.assert_called()


def test_console_handler_writes_to_stderr():
    """console 處理器不佔用 stdout"""
    import sys

    from kelab.core.logging import create_handler

    handler = create_handler({"type": "console", "level": "DEBUG"})
    assert isinstance(handler, logging.StreamHandler)
    assert handler.stream is sys.stderr
    assert handler.level == logging.DEBUG


def test_file_handler_creates_directory(tmp_path):
    """file 處理器建立日誌目錄"""
    from kelab.core.logging import create_handler

    target = tmp_path / "logs" / "kelab.log"
    handler = create_handler({"type": "file", "filename": str(target)})
    try:
        assert target.parent.is_dir()
        assert isinstance(handler, logging.handlers.RotatingFileHandler)
    finally:
        handler.close()


def test_logger_levels():
    """測試不同的日誌級別"""
    from kelab.core.logging import get_logger, setup_logging

    setup_logging(level="DEBUG", format_type="console")
    logger = get_logger("kelab.test")
    logger.debug("debug event", value=1)
    logger.info("info event", value=2)
    logger.warning("warning event", value=3)
    assert logging.getLogger().level == logging.DEBUG


@pytest.mark.unit
class TestNumericValues:
    """測試 numpy 值的日誌轉換"""

    def test_scalars_and_small_arrays(self):
        """numpy 純量與小陣列轉為 Python 值"""
        import numpy as np

        from kelab.core.logging import numeric_values

        event = numeric_values(
            None,
            "info",
            {"residual": np.float64(1.5), "steps": np.int64(3), "x": np.arange(3)},
        )

        assert event == {"residual": 1.5, "steps": 3, "x": [0, 1, 2]}
        assert type(event["steps"]) is int

    def test_large_array_summary(self):
        """大陣列只保留 shape/min/max，忽略非有限值"""
        import numpy as np

        from kelab.core.logging import numeric_values

        values = np.linspace(-1.0, 2.0, 20)
        values[0] = np.inf

        event = numeric_values(None, "info", {"u": values})

        assert event["u"]["shape"] == [20]
        assert event["u"]["max"] == 2.0
        assert event["u"]["min"] == pytest.approx(-1.0 + 3.0 / 19.0)


@pytest.mark.unit
class TestRunContext:
    """測試執行上下文綁定"""

    def test_bound_inside_block(self):
        """區塊內綁定，離開後清除"""
        import structlog

        from kelab.core.logging import run_context

        with run_context(run="solve", seed=7):
            assert structlog.contextvars.get_contextvars() == {
                "run": "solve",
                "seed": 7,
            }
        assert "run" not in structlog.contextvars.get_contextvars()
