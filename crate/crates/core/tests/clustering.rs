use mobscope::cluster::{
    distance_matrix, log_density_distance, per_day_fields, single_linkage, ClusterLabels,
};
use mobscope::kde::{Bandwidths, DayWeights, TimeGrid};
use mobscope::{Day, GpsDataset, GridSpec, Point};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parked_day(id: i64, at: Point) -> Day {
    Day::new(id, vec![0.25, 0.75], vec![at, at]).unwrap()
}

fn gauss(x: f64, y: f64, c: Point, h: f64) -> f64 {
    (-0.5 * ((x - c.x).powi(2) + (y - c.y).powi(2)) / (h * h)).exp()
        / (2.0 * std::f64::consts::PI * h * h)
}

#[test]
fn grid_distance_converges_to_the_continuum_integral() {
    let (a, b) = (Point::new(0.0, 0.0), Point::new(0.35, -0.1));
    let h = 0.2;
    let xi = 1e-4;
    // continuum value by a composite Simpson rule over a box where both
    // Gaussians are below 1e-30 of ξ at the edges, using the analytic densities
    let (lo, hi, k) = (-3.0, 3.5, 2600usize);
    let step = (hi - lo) / k as f64;
    let wt = |i: usize| {
        if i == 0 || i == k {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut exact = 0.0;
    for i in 0..=k {
        let x = lo + i as f64 * step;
        for j in 0..=k {
            let y = lo + j as f64 * step;
            let d = (gauss(x, y, a, h) + xi).ln() - (gauss(x, y, b, h) + xi).ln();
            exact += wt(i) * wt(j) * d * d;
        }
    }
    exact *= step * step / 9.0;

    let data = GpsDataset::new(vec![parked_day(0, a), parked_day(1, b)]).unwrap();
    let w = DayWeights::time_weighted(&data).unwrap();
    let grid = GridSpec::new(-3.0, -3.0, 650, 650, 0.01, 0.01).unwrap();
    let f = per_day_fields(&data, &w, h, &grid).unwrap();
    let got = log_density_distance(&f[0], &f[1], xi).unwrap();
    assert!((got - exact).abs() < 2e-3 * exact, "{got} vs {exact}");
}

#[test]
fn distances_form_a_pseudo_metric_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let days: Vec<Day> = (0..6)
        .map(|i| {
            let pts = (0..20)
                .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            Day::new(i, (0..20).map(|j| (j as f64 + 0.5) / 20.0).collect(), pts).unwrap()
        })
        .collect();
    let data = GpsDataset::new(days).unwrap();
    let grid = GridSpec::new(-2.0, -2.0, 40, 40, 0.1, 0.1).unwrap();
    let d = distance_matrix(
        &data,
        Bandwidths::new(0.2, 0.05).unwrap(),
        &grid,
        TimeGrid::new(288).unwrap(),
        1e-4,
    )
    .unwrap();
    for i in 0..6 {
        assert_eq!(d.get(i, i), 0.0);
        for j in 0..6 {
            assert_eq!(d.get(i, j), d.get(j, i));
            assert!(d.get(i, j) >= 0.0);
        }
    }
    let dend = single_linkage(&d).unwrap();
    assert!(dend.merges().windows(2).all(|m| m[0].height <= m[1].height));
}

#[test]
fn clustering_ignores_day_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centers = [
        Point::new(0.0, 0.0),
        Point::new(2.0, 0.0),
        Point::new(0.0, 2.0),
    ];
    let mut days: Vec<Day> = (0..12)
        .map(|i| {
            let c = centers[i % 3];
            let pts = (0..30)
                .map(|_| {
                    Point::new(
                        c.x + rng.random_range(-0.3..0.3),
                        c.y + rng.random_range(-0.3..0.3),
                    )
                })
                .collect();
            Day::new(
                i as i64,
                (0..30).map(|j| (j as f64 + 0.5) / 30.0).collect(),
                pts,
            )
            .unwrap()
        })
        .collect();
    let grid = GridSpec::new(-1.0, -1.0, 40, 40, 0.1, 0.1).unwrap();
    let bw = Bandwidths::new(0.2, 0.05).unwrap();
    let times = TimeGrid::new(288).unwrap();
    let labels_by_id = |days: &[Day]| {
        let data = GpsDataset::new(days.to_vec()).unwrap();
        let d = distance_matrix(&data, bw, &grid, times, 1e-4).unwrap();
        let labels = single_linkage(&d).unwrap().cut_k(3).unwrap();
        let mut pairs: Vec<(i64, usize)> = data
            .days()
            .iter()
            .map(|d| d.id())
            .zip(labels.labels().iter().copied())
            .collect();
        pairs.sort();
        pairs.into_iter().map(|p| p.1).collect::<Vec<_>>()
    };
    let a = labels_by_id(&days);
    let truth: Vec<usize> = (0..12).map(|i| i % 3 + 1).collect();
    assert!(ClusterLabels::from_assignments(&a)
        .same_partition(&ClusterLabels::from_assignments(&truth)));
    days.shuffle(&mut rng);
    let b = labels_by_id(&days);
    assert!(
        ClusterLabels::from_assignments(&a).same_partition(&ClusterLabels::from_assignments(&b))
    );
}
