"""Named grid objects and the information banner they print."""
from typing import Iterable, Optional, Tuple

BANNER_WIDTH = 50
LABEL_WIDTH = 30


def banner(title: str, rows: Iterable[Tuple[Optional[str], object]]) -> str:
    """Formats an information block.

    Parameters
    ----------
    title : str
        Centred in the opening rule.
    rows : iterable of (label, value)
        Printed as ``LABEL:`` padded to the label column, then the value. A
        row whose label is None is printed verbatim (separators, sub-headers).

    Return
    ------
    str
    """
    msg = ["", f"  {title}  ".center(BANNER_WIDTH, "=")]
    for label, value in rows:
        if label is None:
            msg.append(str(value))
        else:
            msg.append(f"{label}:".ljust(LABEL_WIDTH) + str(value))
    msg.append("".center(BANNER_WIDTH, "="))
    return "\n".join(msg)


class GridElement:
    """Base of the objects a user inspects: cases, injection models, attack
    vectors and subgraphs. Subclasses describe themselves in ``__str__``."""

    def __init__(self, name: str) -> None:
        self.__name: str = name

    def get_name(self) -> str:
        return self.__name

    def get_info(self) -> None:
        print(self.__str__())
