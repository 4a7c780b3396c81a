from .app import ClipStore, create_app

__all__ = ["ClipStore", "create_app"]
