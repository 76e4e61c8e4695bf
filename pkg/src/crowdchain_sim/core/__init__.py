"""
协议核心
密码原语、证明系统、匿名认证、账本仿真、任务合约与参与方逻辑
"""
