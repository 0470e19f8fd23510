from dataclasses import dataclass, field

from .distributions import ArrivalDist, PatienceDist, arrival_from_dict, patience_from_dict
from .errors import SchemaError


@dataclass(frozen=True)
class QueueSpec:
    """One waitlist: inter-arrival distribution, patience distribution, label."""

    arrival: ArrivalDist
    patience: PatienceDist
    label: str = "q"
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def intensity(self):
        return self.arrival.intensity

    @property
    def bound(self):
        return self.patience.bound

    def to_dict(self):
        out = {"id": self.label, "arrival": self.arrival.to_dict(),
               "patience": self.patience.to_dict()}
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, d):
        allowed = {"id", "arrival", "patience", "meta"}
        extra = set(d) - allowed
        if extra:
            raise SchemaError(f"unknown queue keys {sorted(extra)}", field=sorted(extra)[0])
        for key in ("arrival", "patience"):
            if key not in d:
                raise SchemaError(f"queue missing '{key}'", field=key)
        return cls(arrival_from_dict(d["arrival"]), patience_from_dict(d["patience"]),
                   str(d.get("id", "q")), dict(d.get("meta", {})))
