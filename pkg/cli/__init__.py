# FNSLab CLI Module
from .app import run_app, parse_cli, build_parser
