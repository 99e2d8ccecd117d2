#!/usr/bin/env python3
"""
memwave - 统一启动入口

  python run.py run --config scenario.toml
  python run.py check-kernel "abel(alpha=0.5)"
  python run.py resolvent "exponential(beta=2.0)" --dt 0.01 --n 500
  python run.py convergence --config scenario.toml
"""
import sys

from memwave.main import main


if __name__ == "__main__":
    sys.exit(main())
