"""分析功能模块：假设检验、能量诊断、场景配置与输出"""
