#!/usr/bin/env python3
"""Regenerates the bundled roadmap interchange files under maps/.

Both maps are fully deterministic. Junction coordinates are emitted with
full double precision and every road's length_m is the haversine arc length
of its polyline, so the files always satisfy the loader's <1% length check
and the 1 m endpoint/junction coincidence rule.
"""

import json
import math
import pathlib
import random

EARTH_RADIUS_M = 6371000.0
M_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0


def haversine_m(a, b):
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    dp = math.radians(b[0] - a[0])
    dl = math.radians(b[1] - a[1])
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def arc_length(polyline):
    return sum(haversine_m(polyline[i], polyline[i + 1]) for i in range(len(polyline) - 1))


def make_grid(n=5, edge_m=200.0, lat0=1.3000, lon0=103.8000):
    dlat = edge_m / M_PER_DEG_LAT
    dlon = edge_m / (M_PER_DEG_LAT * math.cos(math.radians(lat0 + (n - 1) / 2 * dlat)))
    junctions = []
    coord = {}
    for i in range(n):
        for j in range(n):
            jid = f"J{i}{j}"
            lat, lon = lat0 + i * dlat, lon0 + j * dlon
            coord[jid] = (lat, lon)
            junctions.append({"id": jid, "lat": lat, "lon": lon})

    h_speeds = [8.0, 13.9, 25.0, 10.0, 16.7]
    v_speeds = [13.9, 8.0, 20.0, 25.0, 11.1]
    roads = []
    for i in range(n):
        for j in range(n - 1):
            a, b = f"J{i}{j}", f"J{i}{j+1}"
            poly = [list(coord[a]), list(coord[b])]
            roads.append({"id": f"H{i}{j}", "from": a, "to": b,
                          "length_m": arc_length(poly), "max_speed_mps": h_speeds[i],
                          "polyline": poly})
    for i in range(n - 1):
        for j in range(n):
            a, b = f"J{i}{j}", f"J{i+1}{j}"
            poly = [list(coord[a]), list(coord[b])]
            roads.append({"id": f"V{i}{j}", "from": a, "to": b,
                          "length_m": arc_length(poly), "max_speed_mps": v_speeds[j],
                          "polyline": poly})
    return {"junctions": junctions, "roads": roads}


def poisson_points(rng, count, min_dist_m, lat0, lon0, extent_m):
    pts = []
    attempts = 0
    while len(pts) < count and attempts < 200000:
        attempts += 1
        north = rng.uniform(0, extent_m)
        east = rng.uniform(0, extent_m)
        if all(math.hypot(north - p[0], east - p[1]) >= min_dist_m for p in pts):
            pts.append((north, east))
    out = []
    for north, east in pts:
        lat = lat0 + north / M_PER_DEG_LAT
        lon = lon0 + east / (M_PER_DEG_LAT * math.cos(math.radians(lat0)))
        out.append((lat, lon))
    return out


def make_city(seed=20240509, lat0=1.2800, lon0=103.8400):
    from scipy.spatial import Delaunay
    import numpy as np

    rng = random.Random(seed)
    pts = poisson_points(rng, 60, 190.0, lat0, lon0, 2600.0)
    xy = np.array([[(p[1] - lon0) * M_PER_DEG_LAT * math.cos(math.radians(lat0)),
                    (p[0] - lat0) * M_PER_DEG_LAT] for p in pts])
    tri = Delaunay(xy)

    edges = set()
    for simplex in tri.simplices:
        for k in range(3):
            a, b = sorted((int(simplex[k]), int(simplex[(k + 1) % 3])))
            edges.add((a, b))

    def edge_len(e):
        return float(np.hypot(*(xy[e[0]] - xy[e[1]])))

    def edge_angle(at, other):
        v = xy[other] - xy[at]
        return math.atan2(v[1], v[0])

    # Keep roads of plausible block length, then enforce a minimum angular
    # separation between roads meeting at a junction so nearest-sample
    # matching close to a junction is unambiguous.
    kept = sorted(e for e in edges if 150.0 <= edge_len(e) <= 450.0)
    incident = {}
    final = []
    for e in kept:
        ok = True
        for at, other in ((e[0], e[1]), (e[1], e[0])):
            ang = edge_angle(at, other)
            for prev in incident.get(at, []):
                diff = abs(ang - prev)
                diff = min(diff, 2 * math.pi - diff)
                if diff < math.radians(28.0):
                    ok = False
        if not ok:
            continue
        final.append(e)
        incident.setdefault(e[0], []).append(edge_angle(e[0], e[1]))
        incident.setdefault(e[1], []).append(edge_angle(e[1], e[0]))

    # Largest connected component only.
    adj = {}
    for a, b in final:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, best = set(), []
    for start in adj:
        if start in seen:
            continue
        comp, stack = [], [start]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            comp.append(v)
            stack.extend(adj[v] - seen)
        if len(comp) > len(best):
            best = comp
    keep_nodes = set(best)
    final = [e for e in final if e[0] in keep_nodes and e[1] in keep_nodes]

    node_ids = {}
    junctions = []
    for idx in sorted(keep_nodes):
        jid = f"C{idx:02d}"
        node_ids[idx] = jid
        junctions.append({"id": jid, "lat": pts[idx][0], "lon": pts[idx][1]})

    speeds = [8.3, 11.1, 13.9, 16.7, 22.2, 25.0]
    roads = []
    for n, (a, b) in enumerate(sorted(final)):
        pa, pb = pts[a], pts[b]
        length = haversine_m(pa, pb)
        # Gentle curvature: interior vertices offset perpendicularly with a
        # sine profile that tapers to zero at both endpoints.
        segs = max(2, int(length // 70))
        amp = rng.uniform(2.0, 8.0) * rng.choice([-1.0, 1.0])
        dlat, dlon = pb[0] - pa[0], pb[1] - pa[1]
        # Perpendicular direction in local meters.
        de = dlon * M_PER_DEG_LAT * math.cos(math.radians(lat0))
        dn = dlat * M_PER_DEG_LAT
        norm = math.hypot(de, dn)
        perp_n, perp_e = -de / norm, dn / norm
        poly = [list(pa)]
        for k in range(1, segs):
            t = k / segs
            off = amp * math.sin(math.pi * t)
            lat = pa[0] + dlat * t + off * perp_n / M_PER_DEG_LAT
            lon = pa[1] + dlon * t + off * perp_e / (M_PER_DEG_LAT * math.cos(math.radians(lat0)))
            poly.append([lat, lon])
        poly.append(list(pb))
        roads.append({"id": f"R{n:03d}", "from": node_ids[a], "to": node_ids[b],
                      "length_m": arc_length(poly),
                      "max_speed_mps": speeds[n % len(speeds)],
                      "polyline": poly})
    return {"junctions": junctions, "roads": roads}


def dump(doc, path):
    text = json.dumps(doc, indent=1)
    path.write_text(text + "\n")
    print(f"{path}: {len(doc['junctions'])} junctions, {len(doc['roads'])} roads")


if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parent.parent / "maps"
    out.mkdir(exist_ok=True)
    dump(make_grid(), out / "grid5x5.json")
    dump(make_city(), out / "city_extract.json")
