#!/usr/bin/env python3
"""Print the switch/link layout a topology builder produces.

Examples:
  python scripts/dump_topology.py fat_tree --hosts 16 -p k=4
  python scripts/dump_topology.py bcube --hosts 4 -p n=2 -p k=1
  python scripts/dump_topology.py star --hosts 8
"""

import argparse

from dcsim.network import build_topology


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("kind", help="star|fat_tree|bcube|camcube|flattened_butterfly")
    ap.add_argument("--hosts", type=int, required=True)
    ap.add_argument("--rate-gbps", type=float, default=1.0)
    ap.add_argument("-p", "--param", action="append", default=[],
                    help="builder parameter, e.g. -p k=4 (repeatable)")
    args = ap.parse_args()

    params = {}
    for item in args.param:
        key, _, raw = item.partition("=")
        if not raw:
            ap.error(f"parameter {item!r} is not key=value")
        try:
            params[key] = int(raw)
        except ValueError:
            params[key] = [int(x) for x in raw.split(",")]

    topo = build_topology(args.kind, args.hosts, args.rate_gbps * 1e9, **params)
    print(topo.to_adjacency_text())
    print(f"switches: {len(topo.switches)}  links: {len(topo.links)}  "
          f"switch ports: {topo.n_switch_ports()}")


if __name__ == "__main__":
    main()
