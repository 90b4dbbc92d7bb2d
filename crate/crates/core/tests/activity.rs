use mobscope::activity::{
    activity_space, density_to_activity_bound, detect_anchors, high_activity_bound, level_set,
    observation_densities, AnchorLevel, WeightedEdf, MASS_TOLERANCE,
};
use mobscope::kde::{self, DayWeights};
use mobscope::{Day, GpsDataset, GridSpec, Point};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn clustered_days(rng: &mut ChaCha8Rng, n: usize, per_day: usize) -> GpsDataset {
    let centers = [
        Point::new(0.0, 0.0),
        Point::new(1.5, 0.4),
        Point::new(-0.7, 1.1),
    ];
    let days = (0..n)
        .map(|i| {
            let m = rng.random_range(2..=per_day);
            let mut ts: Vec<f64> = (0..m).map(|_| rng.random_range(0.001..0.999)).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let pts = ts
                .iter()
                .map(|_| {
                    let c = centers[rng.random_range(0..centers.len())];
                    let s = rng.random_range(0.05..0.4);
                    let ex: f64 = rng.sample(StandardNormal);
                    let ey: f64 = rng.sample(StandardNormal);
                    Point::new(c.x + s * ex, c.y + s * ey)
                })
                .collect();
            Day::new(i as i64, ts, pts).unwrap()
        })
        .collect();
    GpsDataset::new(days).unwrap()
}

/// Largest level among a sweep whose upper level set still holds EDF mass `rho`.
fn brute_force_level(p: &[f64], masses: &[f64], rho: f64) -> f64 {
    let top = p.iter().copied().fold(0.0, f64::max);
    let mut levels: Vec<f64> = (0..512).map(|k| top * k as f64 / 511.0).collect();
    levels.extend_from_slice(p);
    let mut best = 0.0;
    for &l in &levels {
        let mass: f64 = p
            .iter()
            .zip(masses)
            .filter(|(q, _)| **q >= l)
            .map(|(_, m)| m)
            .sum();
        if mass >= rho - MASS_TOLERANCE && l > best {
            best = l;
        }
    }
    best
}

#[test]
fn fast_activity_space_matches_brute_force_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..40 {
        let n = rng.random_range(1..=8);
        let data = clustered_days(&mut rng, n, 25);
        assert!(data.n_obs() <= 200);
        let weights = DayWeights::time_weighted(&data).unwrap();
        let h = rng.random_range(0.05..0.3);
        let kde = kde::weighted_kernel(&data, &weights, h).unwrap();
        let edf = WeightedEdf::new(&data, &weights).unwrap();
        let p = observation_densities(&kde, &edf);
        let grid = GridSpec::new(-2.0, -1.5, 60, 50, 0.07, 0.07).unwrap();
        let field = kde.eval_grid(&grid);
        let mut previous: Option<mobscope::activity::RegionMask> = None;
        for rho in [0.5, 0.7, 0.9, 0.99] {
            let fast = activity_space(&field, &p, &edf, rho).unwrap();
            let level = brute_force_level(&p, edf.masses(), rho);
            assert_eq!(fast.level, level, "trial {trial}, rho {rho}");
            assert_eq!(
                fast.mask,
                level_set(&field, level),
                "trial {trial}, rho {rho}"
            );
            assert!(fast.covered >= rho - 1e-12);
            if let Some(prev) = &previous {
                assert!(prev.is_subset_of(&fast.mask));
            }
            previous = Some(fast.mask);
        }
    }
}

#[test]
fn identical_observations_give_the_top_bump() {
    let p = Point::new(0.3, 0.3);
    let day = Day::new(0, vec![0.1, 0.5, 0.9], vec![p; 3]).unwrap();
    let data = GpsDataset::new(vec![day]).unwrap();
    let w = DayWeights::time_weighted(&data).unwrap();
    let kde = kde::weighted_kernel(&data, &w, 0.2).unwrap();
    let edf = WeightedEdf::new(&data, &w).unwrap();
    let dens = observation_densities(&kde, &edf);
    let grid = GridSpec::centered(p, 21, 21, 0.05, 0.05).unwrap();
    let field = kde.eval_grid(&grid);
    for rho in [0.1, 0.5, 0.99] {
        let q = activity_space(&field, &dens, &edf, rho).unwrap();
        assert!(q.mask.contains_point(p));
        assert_eq!(q.mask.count(), 1);
    }
}

#[test]
fn one_bump_one_anchor_two_bumps_two_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 0.1;
    let blob = |rng: &mut ChaCha8Rng, c: Point, k: usize| -> Vec<Point> {
        (0..k)
            .map(|_| {
                let ex: f64 = rng.sample(StandardNormal);
                let ey: f64 = rng.sample(StandardNormal);
                Point::new(c.x + 0.05 * ex, c.y + 0.05 * ey)
            })
            .collect()
    };
    let a = Point::new(0.0, 0.0);
    let b = Point::new(0.8, 0.1);
    let day = |pts: Vec<Point>| {
        let m = pts.len();
        Day::new(
            0,
            (0..m).map(|j| (j as f64 + 0.5) / m as f64).collect(),
            pts,
        )
        .unwrap()
    };
    let one = GpsDataset::new(vec![day(blob(&mut rng, a, 200))]).unwrap();
    let mut pts = blob(&mut rng, a, 200);
    pts.extend(blob(&mut rng, b, 200));
    let two = GpsDataset::new(vec![day(pts)]).unwrap();
    let grid = GridSpec::new(-1.0, -1.0, 40, 30, 0.05, 0.05).unwrap();
    for (data, expect) in [(&one, vec![a]), (&two, vec![a, b])] {
        let kde = kde::naive_kernel(data, h).unwrap();
        let field = kde.eval_grid(&grid);
        let found = detect_anchors(&kde, &field, AnchorLevel::Density(1.0)).unwrap();
        assert_eq!(found.len(), expect.len());
        for e in expect {
            // the sample mean of each blob, not the design center, is the mode
            assert!(found.iter().any(|f| f.location.dist(e) < 0.03));
        }
        // the brute-force argmax of each half-plane is the reported mode up to grid resolution
        for f in &found {
            let best = (0..grid.len())
                .map(|c| grid.center(c % grid.n_x, c / grid.n_x))
                .filter(|q| (q.x < 0.4) == (f.location.x < 0.4))
                .max_by(|p, q| kde.density_at(*p).total_cmp(&kde.density_at(*q)))
                .unwrap();
            assert!(best.dist(f.location) < 0.05);
        }
    }
}

#[test]
fn anchors_ignore_day_order_and_duplicate_days() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = clustered_days(&mut rng, 6, 60);
    let grid = GridSpec::new(-1.5, -1.0, 70, 50, 0.05, 0.05).unwrap();
    let detect = |d: &GpsDataset| {
        let kde = kde::naive_kernel(d, 0.15).unwrap();
        detect_anchors(&kde, &kde.eval_grid(&grid), AnchorLevel::Density(0.3)).unwrap()
    };
    let base = detect(&data);
    assert!(!base.is_empty());
    let mut days = data.days().to_vec();
    days.shuffle(&mut rng);
    assert_eq!(detect(&GpsDataset::new(days.clone()).unwrap()), base);
    days.push(days[0].clone());
    let with_dup = detect(&GpsDataset::new(days).unwrap());
    // duplicating a day reweights the estimate, so compare only locations
    assert_eq!(with_dup.len(), base.len());
}

#[test]
fn closed_form_bounds() {
    assert!((high_activity_bound(0.5, 0.2, 0.2).unwrap() - 0.196_734_670_143_683_3).abs() < 1e-12);
    assert_eq!(density_to_activity_bound(1.0, 0.3, 0.2).unwrap().bound, 1.0);
    let b = density_to_activity_bound(0.9, 0.02, 0.2).unwrap();
    assert!(b.vacuous);
    assert_eq!(b.bound, 0.0);
    assert!(high_activity_bound(0.5, 0.0, 0.2).is_err());
}
