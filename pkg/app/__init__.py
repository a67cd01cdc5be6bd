# Makes the 'app' directory a regular package so test imports like
# 'from app.backends import make_backend' and 'from app.main import app' resolve reliably.
