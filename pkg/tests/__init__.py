"""
Mnemosyne MCP - 測試模組

這個模組包含了所有的測試代碼。
"""
