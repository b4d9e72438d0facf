"""IOB2 label inventory for the four TIMEX3 types."""

from .errors import DataError

TYPES = ("DATE", "TIME", "DURATION", "SET")


class LabelScheme:
    """The nine IOB2 labels; O is index 0 so it wins Viterbi ties."""

    def __init__(self, types=TYPES):
        self.types = tuple(types)
        self.labels = ["O"]
        for t in self.types:
            self.labels += [f"B-{t}", f"I-{t}"]
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelScheme) and self.labels == other.labels

    def to_index(self, label):
        try:
            return self.index[label]
        except KeyError:
            raise DataError(f"unknown label {label!r}") from None

    def to_label(self, i):
        return self.labels[i]

    def encode(self, labels):
        return [self.to_index(lab) for lab in labels]

    def decode(self, ids):
        return [self.labels[int(i)] for i in ids]

    def allowed_transitions(self):
        """(prev, next) pairs permitted by IOB2; I-X only after B-X or I-X."""
        ok = set()
        for a, la in enumerate(self.labels):
            for b, lb in enumerate(self.labels):
                if lb.startswith("I-") and not (la != "O" and la[2:] == lb[2:]):
                    continue
                ok.add((a, b))
        return ok

    def allowed_starts(self):
        return {i for i, lab in enumerate(self.labels) if not lab.startswith("I-")}


SCHEME = LabelScheme()


def is_valid_iob2(labels):
    prev = "O"
    for lab in labels:
        if lab not in SCHEME.index:
            raise DataError(f"unknown label {lab!r}")
        if lab.startswith("I-") and (prev == "O" or prev[2:] != lab[2:]):
            return False
        prev = lab
    return True
