"""Exit criteria, one test per criterion.

Run alone with ``pytest tests/test_acceptance.py``; the summary prints one
PASS/FAIL line per criterion.
"""
import json
import math
import random
import time

import numpy as np
import pytest

from clutterprop.cli import main
from clutterprop.clutter import ClutterCategory, HeightTable, default_height
from clutterprop.evaluation import (load_measurements, read_measurements, run_evaluation,
                                    write_measurements)
from clutterprop.geodesy import EARTH_RADIUS_M, GeoPoint, great_circle_distance, sample_path
from clutterprop.kernel import LinkSpec, Regime, bullington_loss, fspl, knife_edge_J, predict
from clutterprop.profile import ClutterSource, PathProfile, extract_profile, parse_profile
from clutterprop.raster import (RasterKind, load_ascii_grid, read_raster, resample,
                                write_ascii_grid)

from conftest import METER_DEG, make_raster, spike_scene

criterion = pytest.mark.criterion


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def flat_profile(d, n, clutter=None, terrain=0.0):
    c = np.zeros(n) if clutter is None else np.asarray(clutter, dtype=float)
    return PathProfile(d / (n - 1), np.linspace(0.0, d, n), np.full(n, terrain), c)


@criterion(1, "kernel analytic values")
def test_kernel_analytic_values():
    assert fspl(1.0, 1000.0) == 32.44
    assert abs(knife_edge_J(0.0) - 6.03) <= 0.01
    assert abs(knife_edge_J(1.0) - 13.93) <= 0.01
    below = knife_edge_J(-0.78)
    above = knife_edge_J(math.nextafter(-0.78, 0.0))
    assert below == 0.0 and abs(above - below) <= 0.01


@criterion(2, "unobstructed exactness over 100 random flat links")
def test_unobstructed_exactness():
    rng = random.Random(2)
    ae = 4.0 / 3.0 * 6371000.0
    with Timer() as t:
        for _ in range(100):
            freq = rng.uniform(30.0, 6000.0)
            d_target = rng.uniform(200.0, 20000.0)
            lam = 299792458.0 / (freq * 1e6)
            # equal heights: the worst point is mid-path, where clearance must
            # exceed the earth bulge plus 0.78 / sqrt(8 / (lambda d))
            h = d_target ** 2 / (8 * ae) + 0.78 * math.sqrt(lam * d_target / 8) + 0.5
            h += rng.uniform(0.0, 50.0)
            ground = rng.uniform(-10.0, 800.0)
            tx = GeoPoint(rng.uniform(-60, 60), rng.uniform(-170, 170))
            bearing = rng.uniform(0, 2 * math.pi)
            rx = GeoPoint(tx.lat_deg + math.degrees(d_target / EARTH_RADIUS_M) * math.cos(bearing),
                          tx.lon_deg + math.degrees(d_target / EARTH_RADIUS_M) * math.sin(bearing)
                          / math.cos(math.radians(tx.lat_deg)))
            d = great_circle_distance(tx, rx)
            h = max(h, d ** 2 / (8 * ae) + 0.78 * math.sqrt(lam * d / 8) + 0.5)
            link = LinkSpec(tx, rx, h, h, freq)
            spacing, pts = sample_path(tx, rx, 30.0)
            res = predict(flat_profile(d, len(pts), terrain=ground), link)
            assert abs(res.loss_db - fspl(freq, d)) <= 0.01
            assert res.regime is Regime.LINE_OF_SIGHT
    assert t.elapsed < 1.0


@criterion(3, "monotonicity in clutter and obstacle height")
def test_monotonicity():
    rng = np.random.default_rng(3)
    with Timer() as t:
        for _ in range(200):
            n = int(rng.integers(3, 40))
            d = float(rng.uniform(100, 20000))
            base = np.zeros(n)
            base[1:-1] = rng.uniform(0, 30, n - 2)
            raised = base.copy()
            raised[1:-1] += rng.uniform(0, 10, n - 2) * (rng.random(n - 2) < 0.5)
            htx, hrx = rng.uniform(2, 100), rng.uniform(1, 20)
            freq = float(rng.uniform(30, 6000))
            terrain = rng.uniform(0, 20, n)
            p0 = PathProfile(d / (n - 1), np.linspace(0, d, n), terrain, base)
            p1 = PathProfile(d / (n - 1), np.linspace(0, d, n), terrain, raised)
            l0, _ = bullington_loss(p0, terrain[0] + htx, terrain[-1] + hrx, freq)
            l1, _ = bullington_loss(p1, terrain[0] + htx, terrain[-1] + hrx, freq)
            assert l1 >= l0

        curve = []
        n, d = 101, 5000.0
        for height in np.linspace(0.0, 60.0, 50):
            c = np.zeros(n)
            c[n // 2] = height
            curve.append(bullington_loss(flat_profile(d, n, c), 20.0, 10.0, 1945.0)[0])
        assert all(b >= a for a, b in zip(curve, curve[1:]))
        assert curve[-1] > curve[0]
    assert t.elapsed < 1.0


@criterion(4, "Table I default clutter heights")
def test_table_one():
    t = HeightTable()
    assert default_height(t, ClutterCategory.WATER_OPEN_RURAL) == 0
    assert default_height(t, ClutterCategory.SUBURBAN) == 10
    assert default_height(t, ClutterCategory.URBAN_TREES_FOREST) == 15
    assert default_height(t, ClutterCategory.DENSE_URBAN) == 20


@criterion(5, "evaluation matches brute-force recomputation")
def test_evaluation_oracle(fixtures):
    records = read_measurements(fixtures / "measurements.csv")
    terrain = read_raster(fixtures / "rolling_terrain.asc")
    canopy = ClutterSource(read_raster(fixtures / "canopy.asc", RasterKind.HEIGHT))
    assert len(records) == 10
    with Timer() as t:
        report = run_evaluation(records, terrain, canopy, "canopy", 30.0)

        errors, group_of = {}, {}
        for r in records:
            loss = predict(extract_profile(terrain, canopy, r.tx, r.rx, 30.0), r.link()).loss_db
            errors.setdefault(r.dataset_id, []).append(loss - r.measured_loss_db)
            group_of[r.dataset_id] = r.group_id
        rmse = {}
        for ds, e in errors.items():
            s = report.per_dataset[ds]
            rmse[ds] = math.sqrt(sum(x * x for x in e) / len(e))
            assert abs(s.rmse - rmse[ds]) <= 1e-9
            assert abs(s.mean_error - sum(e) / len(e)) <= 1e-9
            assert abs(s.median_error - sorted(e)[math.ceil(len(e) / 2) - 1]) <= 1e-9
        for g in set(group_of.values()):
            members = [rmse[ds] for ds in rmse if group_of[ds] == g]
            assert abs(report.per_group[g] - sum(members) / len(members)) <= 1e-9
    assert t.elapsed < 1.0


def _full_blocks(values, factor):
    """Input cells and output cells belonging to fully covered blocks."""
    nrows, ncols = values.shape
    fr, fc = nrows // factor, ncols // factor
    south_west = values[::-1][:fr * factor, :fc * factor]
    return south_west, (fr, fc)


@criterion(6, "resampling invariants on 1000 random rasters")
def test_resampling_invariants():
    rng = np.random.default_rng(6)
    with Timer() as t:
        for _ in range(1000):
            factor = int(rng.integers(2, 5))
            nrows, ncols = (int(v) for v in rng.integers(factor, 4 * factor + 1, 2))
            values = rng.uniform(0, 40, (nrows, ncols))
            r = make_raster(values, kind=RasterKind.HEIGHT)
            mean = resample(r, factor, "mean")
            mx = resample(r, factor, "max")
            assert np.all(mx.values >= mean.values)

            cells, (fr, fc) = _full_blocks(values, factor)
            covered = mean.values[::-1][:fr, :fc]
            assert abs(covered.mean() - cells.mean()) <= 1e-9 * abs(cells.mean())

            const = make_raster(np.full((nrows, ncols), float(rng.uniform(0, 30))), kind=RasterKind.HEIGHT)
            for method in ("bilinear", "mean", "max"):
                out = resample(const, factor, method)
                assert np.all(out.values == const.values[0, 0])
    assert t.elapsed < 5.0


@criterion(7, "10 m direct sampling of spiky HAG >= 100 m mean-resampled map")
def test_resolution_sensitivity():
    size = 700
    col_hit, col_miss = 200, 500
    # 10 m samples of a south->north link starting 49.5 m above the grid's
    # south edge sit on rows 650 - 10k; spikes at k = 30 and 40 are hit.
    spikes = [(350, col_hit), (250, col_hit), (300, 420), (120, 610)]
    hag_map, terrain = spike_scene(size=size, spikes=spikes)
    coarse_map = resample(hag_map, 100, "mean")
    direct, coarse = ClutterSource(hag_map), ClutterSource(coarse_map)

    def link(col):
        tx = GeoPoint(45.0 + 49.5 * METER_DEG, -75.0 + (col + 0.5) * METER_DEG)
        rx = GeoPoint(45.0 + 649.5 * METER_DEG, -75.0 + (col + 0.5) * METER_DEG)
        return LinkSpec(tx, rx, 10.0, 1.5, 3875.0)

    with Timer() as t:
        results = {}
        for name, col in (("hit", col_hit), ("miss", col_miss)):
            ln = link(col)
            fine_p = extract_profile(terrain, direct, ln.tx, ln.rx, 10.0)
            coarse_p = extract_profile(terrain, coarse, ln.tx, ln.rx, 100.0)
            results[name] = (predict(fine_p, ln).loss_db, predict(coarse_p, ln).loss_db,
                             fine_p.clutter_m.max())
    fine, smooth, captured = results["hit"]
    assert captured == 20.0
    assert fine > smooth
    fine, smooth, captured = results["miss"]
    assert captured == 0.0
    assert fine >= smooth
    assert t.elapsed < 1.0


@criterion(8, "profile contract on 100 random links")
def test_profile_contract(fixtures):
    terrain = read_raster(fixtures / "rolling_terrain.asc")
    canopy = ClutterSource(read_raster(fixtures / "canopy.asc", RasterKind.HEIGHT))
    rng = random.Random(8)
    lo_lat, hi_lat = terrain.yll_deg + 1e-4, terrain.yur_deg - 1e-4
    lo_lon, hi_lon = terrain.xll_deg + 1e-4, terrain.xur_deg - 1e-4
    with Timer() as t:
        checked = 0
        while checked < 100:
            tx = GeoPoint(rng.uniform(lo_lat, hi_lat), rng.uniform(lo_lon, hi_lon))
            rx = GeoPoint(rng.uniform(lo_lat, hi_lat), rng.uniform(lo_lon, hi_lon))
            spacing = rng.choice([10.0, 30.0, 50.0, 100.0])
            d = great_circle_distance(tx, rx)
            if d < 1.0:
                continue
            p = extract_profile(terrain, canopy, tx, rx, spacing, rng.choice(["nearest", "bilinear"]))
            gaps = np.diff(p.d_m)
            assert p.spacing_m <= spacing * (1 + 1e-6)
            assert np.all(np.abs(gaps - p.spacing_m) <= 1e-6 * p.spacing_m)
            assert p.d_m[0] == 0 and abs(p.distance_m - d) <= 1e-6 * d
            assert p.clutter_m[0] == 0 and p.clutter_m[-1] == 0
            checked += 1
    assert t.elapsed < 1.0


@criterion(9, "round trips: ASCII grids, measurements, CLI profile")
def test_round_trips(fixtures, capsys):
    for path in sorted(fixtures.glob("*.asc")):
        raw = path.read_bytes()
        kind = RasterKind.CLASS_CODE if path.name in ("landcover_esa.asc", "water.asc") else RasterKind.HEIGHT
        r = load_ascii_grid(raw, kind)
        again = load_ascii_grid(write_ascii_grid(r), kind)
        assert again == r and again.values.tobytes() == r.values.tobytes()
        assert write_ascii_grid(r) == raw

    records = read_measurements(fixtures / "measurements.csv")
    assert load_measurements(write_measurements(records)) == records

    terrain = fixtures / "rolling_terrain.asc"
    canopy = fixtures / "canopy.asc"
    tx, rx = GeoPoint(45.306, -75.495), GeoPoint(45.322, -75.474)
    assert main(["profile", "--terrain", str(terrain), "--clutter", str(canopy),
                 "--tx", f"{tx.lat_deg},{tx.lon_deg}", "--rx", f"{rx.lat_deg},{rx.lon_deg}"]) == 0
    parsed = parse_profile(capsys.readouterr().out)
    direct = extract_profile(read_raster(terrain), ClutterSource(read_raster(canopy, RasterKind.HEIGHT)),
                             tx, rx, 30.0)
    rounded = PathProfile(direct.spacing_m, np.round(direct.d_m, 3), np.round(direct.terrain_m, 3),
                          np.round(direct.clutter_m, 3))
    assert np.array_equal(parsed.d_m, rounded.d_m)
    assert np.array_equal(parsed.terrain_m, rounded.terrain_m)
    assert np.array_equal(parsed.clutter_m, rounded.clutter_m)


@criterion(10, "evaluate and grid are byte-identical across runs and worker counts")
def test_determinism(fixtures, tmp_path, capsys):
    common = ["--terrain", str(fixtures / "rolling_terrain.asc"),
              "--landcover", str(fixtures / "landcover_esa.asc"), "--hag", str(fixtures / "hag.asc")]
    payloads = []
    for workers in (1, 4, 1):
        out = tmp_path / f"eval{len(payloads)}.json"
        assert main(["evaluate", *common, "--measurements", str(fixtures / "measurements.csv"),
                     "--sweep-strategies", "defaults,p75", "--sweep-spacings", "30,100",
                     "--workers", str(workers), "--out", str(out)]) == 0
        payloads.append(out.read_bytes())
    assert payloads[0] == payloads[1] == payloads[2]
    assert len(json.loads(payloads[0])["runs"]) == 4

    grids = []
    for workers in (1, 4, 1):
        out = tmp_path / f"grid{len(grids)}.asc"
        assert main(["grid", *common, "--tx", "45.315,-75.485", "--bbox", "45.302,-75.498,45.328,-75.472",
                     "--cell-m", "300", "--workers", str(workers), "--out", str(out)]) == 0
        grids.append(out.read_bytes())
    assert grids[0] == grids[1] == grids[2]
    capsys.readouterr()
