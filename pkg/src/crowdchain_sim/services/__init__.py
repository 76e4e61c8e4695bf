"""
场景服务层
"""
