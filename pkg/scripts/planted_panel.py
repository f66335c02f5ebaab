"""Write a planted-truth monthly panel and instrument, then run the estimate command on it."""
import argparse
import json
from pathlib import Path

from proxydfm.cli import main as cli
from proxydfm.dgp_sim import simulate_planted
from proxydfm.panel import save_csv
from proxydfm.proxy_ident import save_instrument_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--T", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/planted")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pp = simulate_planted(N=args.N, T=args.T, seed=args.seed)
    save_csv(pp.panel, out / "panel.csv")
    save_instrument_csv(pp.instrument, out / "instrument.csv")
    (out / "config.json").write_text(json.dumps({"r": 3, "q": 2, "p": 2, "horizon": 48}))
    with open(out / "planted_irf.csv", "w") as fh:
        fh.write("horizon,variable,value,fevd\n")
        for h in range(pp.irf.shape[0]):
            for j, name in enumerate(pp.panel.names):
                fh.write(f"{h},{name},{float(pp.irf[h, j])!r},{float(pp.fevd[h, j])!r}\n")
    return cli(["estimate", "--panel", str(out / "panel.csv"), "--instrument", str(out / "instrument.csv"),
                "--config", str(out / "config.json"), "--out", str(out / "estimate")])


if __name__ == "__main__":
    raise SystemExit(main())
