use std::collections::BTreeSet;
use std::f64::consts::PI;

use approx::assert_relative_eq;
use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use snowline::calendar::daily_axis;
use snowline::dataset::{read_dataset, write_dataset};
use snowline::grid::{
    area_weighted_mean, central_angle, lon_diff, regrid_nearest, GeoGrid, GridField, Selector, Surface,
    SurfaceMask, EARTH_RADIUS_KM,
};

/// Exhaustive nearest-centre scan with the documented tie rule.
fn brute_nearest(src: &GeoGrid, lat: f64, lon: f64) -> (usize, usize) {
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..src.nlat() {
        for j in 0..src.nlon() {
            let d = central_angle(
                lat.to_radians(),
                src.lat(i).to_radians(),
                lon_diff(lon, src.lon(j)).to_radians(),
            );
            if d < best.0 - 1e-12 {
                best = (d, (i, j));
            }
        }
    }
    best.1
}

fn field(grid: GeoGrid, nt: usize, f: impl Fn(usize, usize, usize) -> f32) -> GridField {
    let times: Vec<NaiveDate> = daily_axis(2001, 2001).into_iter().take(nt).collect();
    let values = Array3::from_shape_fn((nt, grid.nlat(), grid.nlon()), |(t, i, j)| f(t, i, j));
    GridField::new(grid, times, values, "K", "x").unwrap()
}

#[test]
fn sphere_area_closure() {
    for (dlat, dlon) in [(2.5, 2.5), (1.0, 1.0), (0.5625, 0.5625), (7.5, 12.0)] {
        let g = GeoGrid::global(dlat, dlon).unwrap();
        let sphere = 4.0 * PI * EARTH_RADIUS_KM.powi(2);
        assert_relative_eq!(g.total_area(), sphere, max_relative = 1e-4);
    }
    assert_relative_eq!(4.0 * PI * EARTH_RADIUS_KM.powi(2), 5.1006e8, max_relative = 1e-4);
}

#[test]
fn polar_cell_is_a_cap_sector() {
    // Cell centred at 89.5 with 1 degree spacing: edges 89 and 90.
    let g = GeoGrid::global(1.0, 1.0).unwrap();
    let cap = EARTH_RADIUS_KM.powi(2) * 1f64.to_radians() * (1.0 - 89f64.to_radians().sin());
    assert_relative_eq!(g.cell_area(179).unwrap(), cap, max_relative = 1e-12);
    assert!(g.cell_area(180).is_err());
}

#[test]
fn checkerboard_onto_fine_grid() {
    let coarse = GeoGrid::global(2.5, 2.5).unwrap();
    let fine = GeoGrid::global(0.125, 0.125).unwrap();
    let src = field(coarse, 1, |_, i, j| ((i + j) % 2) as f32);
    let out = regrid_nearest(&src, &fine).unwrap();
    let distinct: BTreeSet<u32> = out.values().iter().map(|v| v.to_bits()).collect();
    let want: BTreeSet<u32> = src.values().iter().map(|v| v.to_bits()).collect();
    assert_eq!(distinct, want);
    // Exhaustive scan on a deterministic sample of destination cells.
    for k in (0..fine.len()).step_by(997) {
        let (i, j) = (k / fine.nlon(), k % fine.nlon());
        let (si, sj) = brute_nearest(&coarse, fine.lat(i), fine.lon(j));
        assert_eq!(out.values()[[0, i, j]], src.values()[[0, si, sj]], "cell {i},{j}");
    }
}

#[test]
fn three_by_three_hand_weights() {
    // Rows centred at -30, 0, 30 with 30-degree spacing, 3 columns of 30 degrees.
    let g = GeoGrid::new(-30.0, 15.0, 30.0, 30.0, 3, 3).unwrap();
    let r2 = EARTH_RADIUS_KM.powi(2) * 30f64.to_radians();
    let s = |d: f64| d.to_radians().sin();
    let rows = [r2 * (s(-15.0) - s(-45.0)), r2 * (s(15.0) - s(-15.0)), r2 * (s(45.0) - s(15.0))];
    let f = field(g, 1, |_, i, j| (i * 3 + j) as f32);
    let mask = SurfaceMask::uniform(g, Surface::Land);
    let got = area_weighted_mean(&f, &mask, &Selector::GLOBAL).unwrap()[0];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += (i * 3 + j) as f64 * rows[i];
            den += rows[i];
        }
    }
    assert_relative_eq!(got, num / den, max_relative = 1e-12);
    // Northern hemisphere only: the equatorial row contributes its northern half.
    let nh: Selector = "nh".parse().unwrap();
    let got = area_weighted_mean(&f, &mask, &nh).unwrap()[0];
    let half = r2 * s(15.0);
    let want = (half * (3.0 + 4.0 + 5.0) + rows[2] * (6.0 + 7.0 + 8.0)) / (3.0 * (half + rows[2]));
    assert_relative_eq!(got, want, max_relative = 1e-12);
}

#[test]
fn two_pixel_symmetry_and_empty_selection() {
    let g = GeoGrid::new(0.0, 0.0, 1.0, 1.0, 1, 2).unwrap();
    let f = field(g, 1, |_, _, j| if j == 0 { 0.0 } else { 10.0 });
    let mask = SurfaceMask::uniform(g, Surface::Ocean);
    assert_relative_eq!(area_weighted_mean(&f, &mask, &Selector::GLOBAL).unwrap()[0], 5.0);
    let land: Selector = "land".parse().unwrap();
    assert!(area_weighted_mean(&f, &mask, &land).is_err());
}

#[test]
fn refinement_invariance_for_constant_field() {
    for d in [10.0, 5.0, 2.5] {
        let g = GeoGrid::global(d, d).unwrap();
        let surface = Array2::from_shape_fn(g.shape(), |(i, j)| {
            if (g.lat(i) + g.lon(j)).sin() > 0.0 { Surface::Land } else { Surface::Ocean }
        });
        let mask = SurfaceMask::new(g, surface).unwrap();
        let f = field(g, 2, |_, _, _| 271.5);
        for sel in ["global", "nh-land", "sh-ocean"] {
            for v in area_weighted_mean(&f, &mask, &sel.parse().unwrap()).unwrap() {
                assert_relative_eq!(v, 271.5, max_relative = 1e-12);
            }
        }
    }
}

fn small_grid() -> impl Strategy<Value = GeoGrid> {
    (1usize..8, 1usize..10, -60.0..30.0f64, 0.0..360.0f64, 1.0..15.0f64, 1.0..30.0f64).prop_map(
        |(nlat, nlon, lat0, lon0, dlat, dlon)| {
            let dlat = dlat.min((90.0 - lat0) / nlat as f64).max(0.1);
            GeoGrid::new(lat0, lon0, dlat, dlon, nlat, nlon).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regrid_matches_exhaustive_scan(src in small_grid(), dst in small_grid(), seed in 0u32..1000) {
        prop_assume!(src.overlaps(&dst));
        let f = field(src, 1, |_, i, j| (i * 31 + j * 7 + seed as usize) as f32);
        let out = regrid_nearest(&f, &dst).unwrap();
        for i in 0..dst.nlat() {
            for j in 0..dst.nlon() {
                let (si, sj) = brute_nearest(&src, dst.lat(i), dst.lon(j));
                prop_assert_eq!(out.values()[[0, i, j]], f.values()[[0, si, sj]]);
            }
        }
    }

    #[test]
    fn regrid_identity_and_pointwise_commutation(src in small_grid(), dst in small_grid()) {
        prop_assume!(src.overlaps(&dst));
        let f = field(src, 2, |t, i, j| (t * 100 + i * 10 + j) as f32 - 40.0);
        prop_assert_eq!(&regrid_nearest(&f, &src).unwrap(), &f);
        let g = |v: f32| v * v - 3.0;
        let a = regrid_nearest(&f.map(g), &dst).unwrap();
        let b = regrid_nearest(&f, &dst).unwrap().map(g);
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn global_grids_close_the_sphere(nlat in 1usize..200, nlon in 1usize..400) {
        let g = GeoGrid::global(180.0 / nlat as f64, 360.0 / nlon as f64).unwrap();
        let sphere = 4.0 * PI * EARTH_RADIUS_KM.powi(2);
        prop_assert!((g.total_area() - sphere).abs() / sphere < 1e-4);
    }

    #[test]
    fn dataset_round_trip_is_bit_exact(bits in proptest::collection::vec(any::<u32>(), 12)) {
        let g = GeoGrid::new(-10.0, 0.0, 10.0, 10.0, 2, 3).unwrap();
        let f = field(g, 2, |t, i, j| f32::from_bits(bits[t * 6 + i * 3 + j]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        write_dataset(&f, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        let a: Vec<u32> = f.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(back.times(), f.times());
    }
}
