"""Clear the bundled 6-bus case and print the hour-21 dispatch, reserve,
price and FTR tables next to the published values."""
import argparse

import numpy as np

from rucmarket.case import load_sixbus
from rucmarket.market import clear_market
from rucmarket.pricing import base_flows
from rucmarket.settlement import FtrPortfolio, ftr_check_and_credit, revenue_adequacy_report

PUBLISHED = {
    "P": [195.19, 25.58, 16.54],
    "lmp": [14.97, 32.64, 34.4, 43.71, 41.94, 35.26],
}
FTR = [202.3429, 23.2771, -55.772, -94.924, -94.924, 20.0]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hour", type=int, default=21, help="1-based hour to report")
    args = ap.parse_args()
    t = args.hour - 1
    portfolio = FtrPortfolio(np.array(FTR))
    res = clear_market(load_sixbus("robust"), portfolio=portfolio)
    case = res.case
    print(f"CCG: {len(res.ccg.trace.iterations)} master solves, |K| = {len(res.points)}, "
          f"cost {res.red.objective:.2f} $")

    print(f"\nunit dispatch and reserves, hour {args.hour} [MW]")
    print("unit        P     Q_up   Q_down")
    for i, g in enumerate(case.generators):
        print(f"{g.name:<4} {res.dispatch.p[i, t]:8.3f} {res.reserves.q_up[i, t]:8.3f} {res.reserves.q_down[i, t]:8.3f}")

    print(f"\nextreme points, hour {args.hour} [MW] and their uncertainty prices [$/MWh]")
    for k, pt in enumerate(res.points):
        print(f"k={k + 1}: eps = {np.round(pt[:, t], 3).tolist()}  UMP = {np.round(res.prices.ump_k[k, :, t], 3).tolist()}")

    print(f"\nprices, hour {args.hour} [$/MWh]")
    print("bus     LMP   UMP_up  UMP_down")
    for m in range(case.n_buses):
        pr = res.prices
        print(f"{m + 1:>3} {pr.energy[m, t]:8.3f} {pr.ump_up[m, t]:8.3f} {pr.ump_down[m, t]:8.3f}")

    flows = base_flows(case, res.dispatch)[:, t]
    print("\nline flows [MW]: " + ", ".join(f"L{l + 1} {f:.2f}/{ln.capacity:g}" for l, (f, ln) in
                                           enumerate(zip(flows, case.lines))))

    chk = ftr_check_and_credit(portfolio, case, res.prices)
    h = res.ledger.hourly()
    print(f"\nFTR: SFT {'ok' if chk.sft_ok else 'violated'}; credit {chk.credit[t]:.2f} $, congestion cost "
          f"{h['congestion_cost'][t]:.2f} $, underfunding {h['ftr_underfunding'][t]:.2f} $, "
          f"transmission reserve credit {h['transmission_reserve_credit'][t]:.2f} $")
    rep = revenue_adequacy_report(res.ledger)
    for it in rep.items:
        print(f"{'PASS' if it.passed else 'FAIL'}  {it.name}")
    dev = np.abs(res.prices.energy[:, 20] - PUBLISHED["lmp"]).max()
    print(f"\nlargest hour-21 LMP deviation from the published table: {dev:.4f} $/MWh")


if __name__ == "__main__":
    main()
