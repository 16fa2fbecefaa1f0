from sphereflow.main import app  # pragma: no cover

if __name__ == "__main__":
    raise SystemExit(app())
