"""Operation cost and uncertainty settlement on the 6-bus case as the
per-bus budget grows, with and without a storage unit at the bus whose
upward uncertainty price is highest."""
import argparse
import dataclasses

import numpy as np

from rucmarket.case import StorageDevice, load_sixbus
from rucmarket.ccg import CcgError
from rucmarket.market import clear_market


def summarize(res):
    led = res.ledger
    return (res.red.objective, led.psi.sum(), led.theta_g.sum(), led.theta_g_storage.sum(), led.theta_t.sum())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.6, 0.8, 1.0])
    ap.add_argument("--budget", type=float, default=2.0)
    ap.add_argument("--storage-mwh", type=float, default=40.0)
    ap.add_argument("--storage-mw", type=float, default=10.0)
    args = ap.parse_args()
    print("lambda  storage       cost $     psi $   theta_G $  theta_G(st) $  theta_T $")
    for lam in args.lambdas:
        case = load_sixbus(None).with_budget(lam, args.budget)
        try:
            base = clear_market(case)
        except CcgError as e:
            print(f"{lam:6.2f}  robust-infeasible: {e}")
            continue
        bus = int(np.argmax(base.prices.ump_up.sum(axis=1)))
        dev = StorageDevice("ES", bus, args.storage_mwh, args.storage_mwh / 2, args.storage_mw, args.storage_mw)
        with_es = clear_market(dataclasses.replace(case, storages=(dev,)))
        for label, res in (("none", base), (f"bus {bus + 1}", with_es)):
            c, psi, tg, ts, tt = summarize(res)
            print(f"{lam:6.2f}  {label:<8} {c:12.2f} {psi:9.2f} {tg:11.2f} {ts:14.2f} {tt:10.2f}")


if __name__ == "__main__":
    main()
