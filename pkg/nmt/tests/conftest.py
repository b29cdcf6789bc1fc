import nmt_support  # noqa: F401  (sys.path setup)
