import os
import sys

# Under ctest, test the extension from the build tree even if an editable
# install is present.
_build = os.environ.get("CFR_PYTHON_BUILD")
if _build:
    sys.meta_path[:] = [f for f in sys.meta_path if not type(f).__module__.startswith("_editable_skbc_")]
    sys.path.insert(0, _build)


def pytest_report_header(config):
    import cfr

    return f"cfr loaded from {os.path.dirname(cfr.__file__)}"
