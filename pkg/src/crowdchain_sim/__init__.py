"""
CrowdChain Sim
去中心化众包协议的确定性单进程仿真器
"""

__version__ = "0.1.0"
