import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

TESTDATA = pathlib.Path(__file__).parent.parent / "testdata"


def load_vector(relpath: str) -> bytes:
    return bytes.fromhex((TESTDATA / relpath).read_text().strip())
