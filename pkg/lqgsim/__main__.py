"""python -m lqgsim"""
from .main import main

main()
