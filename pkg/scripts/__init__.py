# pyright: reportUnusedImport=false

from .uspl_cli import main as uspl_entrypoint
