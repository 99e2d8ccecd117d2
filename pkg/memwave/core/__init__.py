"""核心数值模块：记忆核、Volterra 推进、Galerkin 离散、时间推进"""
