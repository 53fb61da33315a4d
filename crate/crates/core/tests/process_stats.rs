use anderson_core::lattice::{DisorderSpec, SchemeKind};
use anderson_core::process::{
    check_separation, count_distribution, covering_counts, fit_power_law, independence_defect, joint_decorrelation,
    mean_interval, minami_statistic, multiplicity_sweep, run_estimator, sample_range, wegner_estimate,
    wilson_interval, CountEstimator, CoveringConfig, Estimator, LevelConfig, MultiplicityEstimator, PairTally,
    WegnerEstimator,
};
use anderson_core::spectral::{EnergyWindow, ScaledInterval};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::HashSet;

const CAP: usize = 4096;

fn level(kind: SchemeKind, scale: u64, ell: usize, k: f64, seed: u64) -> LevelConfig {
    LevelConfig::new(1, scale, ell, kind, DisorderSpec::uniform(k, seed).unwrap(), CAP).unwrap()
}

fn interval(e: f64, scale: u64) -> ScaledInterval {
    ScaledInterval::new(e, (-1.0, 1.0), scale, 1).unwrap()
}

#[test]
fn wilson_interval_covers_at_nominal_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [0.02, 0.3, 0.5] {
        let n = 200;
        let mut covered = 0;
        for _ in 0..1000 {
            let s = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
            let (c, h) = wilson_interval(s, n);
            if (c - p).abs() <= h {
                covered += 1;
            }
        }
        assert!(covered >= 930, "p={p}: {covered}/1000");
    }
}

#[test]
fn mean_interval_from_power_sums() {
    // 1, 2, 3, 4: mean 2.5, sample variance 5/3
    let (m, h) = mean_interval(4, 10, 30);
    assert_eq!(m, 2.5);
    assert!((h - 1.959963984540054 * (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
}

#[test]
fn power_law_fit_recovers_exact_slope() {
    let xs = [10.0, 20.0, 40.0, 80.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
    let fit = fit_power_law(&xs, &ys).unwrap();
    assert!((fit.slope + 1.5).abs() < 1e-12);
    assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
    assert!(fit.slope_se < 1e-12);
    assert_eq!(fit.points, 4);
    assert!(fit_power_law(&xs, &[1.0, 0.0, 0.0, 0.0]).is_none());
}

#[test]
fn poisson_streams_have_no_defect() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Poisson::new(0.7).unwrap();
    let b = Poisson::new(1.3).unwrap();
    let mut independent = PairTally::default();
    let mut coupled = PairTally::default();
    for _ in 0..20_000 {
        let x: f64 = a.sample(&mut rng);
        let y: f64 = b.sample(&mut rng);
        independent.absorb_counts(x as u32, y as u32);
        // second coordinate shares the first draw
        coupled.absorb_counts(x as u32, (x + y) as u32 / 2);
    }
    let (d, ci) = independent.defect();
    assert!(d <= 3.0 * ci, "independent streams: defect {d} ci {ci}");
    let (d, ci) = coupled.defect();
    assert!(d > 3.0 * ci, "coupled streams: defect {d} ci {ci}");
}

#[test]
fn identical_events_have_defect_p_one_minus_p() {
    let mut t = PairTally::default();
    for i in 0..1000 {
        let e = i % 4 == 0;
        t.absorb_events(e, e);
    }
    let (d, _) = t.defect();
    assert!((d - 0.25 * 0.75).abs() < 1e-12);
}

#[test]
fn estimates_are_reproducible_across_thread_counts() {
    let lv = level(SchemeKind::RankOne, 20, 5, 4.0, 77);
    let est = WegnerEstimator::new(&lv, interval(0.0, 20)).unwrap();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| run_estimator(&est, 3000).unwrap());
    let b = wide.install(|| run_estimator(&est, 3000).unwrap());
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&est.records(&a)).unwrap(),
        serde_json::to_string(&est.records(&b)).unwrap()
    );
}

#[test]
fn tallies_do_not_depend_on_chunking_or_order() {
    let lv = level(SchemeKind::Polymer { block: 2 }, 10, 4, 4.0, 5);
    let cov = CoveringConfig::new(&level(SchemeKind::Polymer { block: 2 }, 10, 2, 4.0, 5)).unwrap();
    let est = WegnerEstimator::new(&lv, interval(0.5, 10)).unwrap();
    let whole = run_estimator(&est, 500).unwrap();
    let mut pieces = Default::default();
    for range in [300..500, 0..17, 17..300] {
        let mut samples = sample_range(&est, range).unwrap();
        samples.reverse();
        for s in samples {
            est.absorb(&mut pieces, s);
        }
    }
    assert_eq!(whole, pieces);

    let counts = CountEstimator::new(&cov, interval(0.0, 10)).unwrap();
    let whole = run_estimator(&counts, 200).unwrap();
    let mut pieces = Default::default();
    for s in sample_range(&counts, 100..200).unwrap().into_iter().chain(sample_range(&counts, 0..100).unwrap()) {
        counts.absorb(&mut pieces, s);
    }
    assert_eq!(whole, pieces);
}

#[test]
fn same_seed_same_records() {
    let lv = level(SchemeKind::RankOne, 30, 4, 3.0, 123);
    let a = wegner_estimate(&lv, interval(1.0, 30), 800).unwrap();
    let b = wegner_estimate(&lv, interval(1.0, 30), 800).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let other = level(SchemeKind::RankOne, 30, 4, 3.0, 124);
    let c = wegner_estimate(&other, interval(1.0, 30), 800).unwrap();
    assert_ne!(a.value, c.value);
}

#[test]
fn joint_never_exceeds_marginals_and_tail_never_exceeds_moment() {
    for (kind, seed) in [(SchemeKind::RankOne, 1), (SchemeKind::Polymer { block: 2 }, 2)] {
        let lv = level(kind, 4, 4, 6.0, seed);
        let recs = joint_decorrelation(&lv, interval(-5.0, 4), interval(5.0, 4), false, 2000).unwrap();
        assert_eq!(recs[0].name, "joint");
        assert!(recs[0].value <= recs[1].value && recs[0].value <= recs[2].value);
        let (tail, moment) = minami_statistic(&lv, ScaledInterval::new(0.0, (-8.0, 8.0), 4, 1).unwrap(), None, 2000).unwrap();
        assert!(tail.value > 0.0);
        // X·(X − m) ≥ 1 whenever X > m
        assert!(tail.value <= moment.value);
    }
}

#[test]
fn close_energies_are_refused_unless_allowed() {
    assert!(check_separation(1, 0.0, 1.0, false).is_err());
    assert!(check_separation(1, 0.0, 1.0, true).is_ok());
    assert!(check_separation(2, -4.5, 4.5, false).is_ok());
    assert!(check_separation(2, -4.0, 4.0, false).is_err());
    let lv = level(SchemeKind::RankOne, 4, 2, 2.0, 0);
    assert!(joint_decorrelation(&lv, interval(0.0, 4), interval(1.0, 4), false, 10).is_err());
}

#[test]
fn covering_cubes_use_disjoint_keys() {
    for kind in [SchemeKind::RankOne, SchemeKind::Polymer { block: 2 }, SchemeKind::Polymer { block: 3 }] {
        for dim in [1, 2] {
            let lv = LevelConfig::from_alpha(dim, 12, 0.5, kind, DisorderSpec::uniform(1.0, 0).unwrap(), CAP).unwrap();
            let Ok(cov) = CoveringConfig::new(&lv) else { continue };
            let per_axis = cov.box_side() / cov.cube_side();
            assert_eq!(cov.num_cubes(), per_axis.pow(dim as u32));
            let mut seen = HashSet::new();
            for p in 0..cov.num_cubes() {
                let sites: HashSet<usize> = cov.cube_sites(p).into_iter().collect();
                for &key in cov.cube_keys(p) {
                    assert!(sites.contains(&(key as usize)), "{kind:?}: key outside its cube");
                    assert!(seen.insert(key), "{kind:?}: key shared between cubes");
                }
            }
        }
    }
}

#[test]
fn zeta_is_sum_of_cube_counts() {
    let lv = LevelConfig::from_alpha(1, 20, 0.5, SchemeKind::RankOne, DisorderSpec::uniform(4.0, 9).unwrap(), CAP).unwrap();
    let cov = CoveringConfig::new(&lv).unwrap();
    let wide = EnergyWindow::new(-20.0, 20.0).unwrap();
    let s = covering_counts(&cov, &lv.level_disorder(), 0, &wide, Some(&wide)).unwrap();
    let cube_dim = cov.model().geometry().matrix_dim() as u32;
    assert!(s.first.iter().all(|&c| c == cube_dim));
    assert_eq!(s.zeta_first(), cube_dim * cov.num_cubes() as u32);
    assert_eq!(s.zeta_first(), s.zeta_second());

    let (tally, records) = count_distribution(&cov, interval(0.0, 20), 400).unwrap();
    assert_eq!(tally.zeta.values().sum::<u64>(), tally.n);
    let pmf: f64 = records.iter().filter(|r| r.name == "zeta_pmf").map(|r| r.value).sum();
    assert!((pmf - 1.0).abs() < 1e-12);
    let jumps: f64 = records.iter().filter(|r| r.name == "jump_pmf").map(|r| r.value).sum();
    assert!((jumps - 1.0).abs() < 1e-12);
    let weighted: u64 = tally.zeta.iter().map(|(&k, &c)| k as u64 * c).sum();
    assert_eq!(weighted, tally.sum);
}

#[test]
fn window_beyond_the_spectrum_gives_point_mass_at_zero() {
    let lv = LevelConfig::from_alpha(1, 20, 0.5, SchemeKind::RankOne, DisorderSpec::uniform(2.0, 1).unwrap(), CAP).unwrap();
    let cov = CoveringConfig::new(&lv).unwrap();
    let (tally, records) = count_distribution(&cov, interval(50.0, 20), 100).unwrap();
    assert_eq!(tally.zeta.len(), 1);
    assert_eq!(tally.zeta[&0], 100);
    let mean = records.iter().find(|r| r.name == "zeta_mean").unwrap();
    assert_eq!((mean.value, mean.ci), (0.0, 0.0));
}

#[test]
fn rank_one_jumps_concentrate_on_one() {
    let mut fractions = Vec::new();
    for scale in [20u64, 40, 80] {
        let lv = LevelConfig::from_alpha(1, scale, 0.5, SchemeKind::RankOne, DisorderSpec::uniform(8.0, 5).unwrap(), CAP)
            .unwrap();
        let cov = CoveringConfig::new(&lv).unwrap();
        let iv = ScaledInterval::new(6.0, (-2.0, 2.0), scale, 1).unwrap();
        let (tally, _) = count_distribution(&cov, iv, 2000).unwrap();
        fractions.push(tally.jump_fraction_at_most(1));
    }
    assert!(fractions.iter().all(|&f| f >= 0.95), "{fractions:?}");
    assert!(fractions[2] >= fractions[0], "{fractions:?}");
}

#[test]
fn polymer_jumps_stay_within_rank() {
    for scale in [20u64, 40, 80] {
        let kind = SchemeKind::Polymer { block: 2 };
        let lv = LevelConfig::from_alpha(1, scale, 0.5, kind, DisorderSpec::uniform(8.0, 5).unwrap(), CAP).unwrap();
        let cov = CoveringConfig::new(&lv).unwrap();
        let iv = ScaledInterval::new(6.0, (-2.0, 2.0), scale, 1).unwrap();
        let (tally, _) = count_distribution(&cov, iv, 2000).unwrap();
        assert!(tally.jump_fraction_at_most(2) >= 0.99, "L={scale}: {:?}", tally.jumps);
    }
}

#[test]
fn multiplicity_bounded_by_rank() {
    let window = EnergyWindow::new(6.0, 10.0).unwrap();
    for (kind, rank) in [(SchemeKind::RankOne, 1), (SchemeKind::Fiber { m: 2 }, 2)] {
        let lv = level(kind, 10, 3, 8.0, 4);
        let (tally, records) = multiplicity_sweep(&lv, window, 1e-7, 200).unwrap();
        assert_eq!(tally.violations, 0);
        assert!(tally.max_seen <= rank);
        assert_eq!(records[1].name, "multiplicity_violation_fraction");
        assert_eq!(records[1].value, 0.0);
    }
    // the fiber copies are exactly degenerate
    let lv = level(SchemeKind::Fiber { m: 2 }, 10, 3, 8.0, 4);
    let (tally, _) = multiplicity_sweep(&lv, EnergyWindow::new(-20.0, 20.0).unwrap(), 1e-7, 20).unwrap();
    assert_eq!(tally.histogram.keys().copied().collect::<Vec<_>>(), vec![2]);
}

#[test]
fn injected_degeneracy_is_flagged() {
    let lv = level(SchemeKind::RankOne, 10, 1, 1.0, 0);
    let est = MultiplicityEstimator::new(&lv, EnergyWindow::new(0.5, 1.5).unwrap(), 1e-8).unwrap();
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0, 2.0]));
    let max = est.census_of_matrix(&m).unwrap();
    assert_eq!(max, 3);
    assert!(max > est.rank());
}

#[test]
fn independence_defect_small_for_separated_energies() {
    let lv = LevelConfig::from_alpha(1, 20, 0.5, SchemeKind::RankOne, DisorderSpec::uniform(8.0, 8).unwrap(), CAP).unwrap();
    let cov = CoveringConfig::new(&lv).unwrap();
    let recs = independence_defect(&cov, interval(-6.0, 20), interval(6.0, 20), false, 4000).unwrap();
    assert_eq!(recs[0].name, "independence_defect");
    assert!(recs[0].value <= 3.0 * recs[0].ci.max(1e-3), "{:?}", recs[0]);
    assert!(recs[1].value <= recs[2].value.min(recs[3].value));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pair_tally_defect_is_bounded(cells in prop::collection::vec(0u64..500, 4)) {
        let t = PairTally { n: cells.iter().sum::<u64>().max(1), both: cells[0], first_only: cells[1], second_only: cells[2] };
        prop_assume!(t.both + t.first_only + t.second_only <= t.n);
        let (d, ci) = t.defect();
        prop_assert!((0.0..=0.25).contains(&d));
        prop_assert!(ci >= 0.0 && ci.is_finite());
    }

    #[test]
    fn wilson_interval_contains_estimate(n in 1u64..10_000, frac in 0.0f64..=1.0) {
        let s = (frac * n as f64).round() as u64;
        let (c, h) = wilson_interval(s, n);
        let p = s as f64 / n as f64;
        prop_assert!(c - h <= p + 1e-12 && p <= c + h + 1e-12);
        prop_assert!(c - h >= -1e-12 && c + h <= 1.0 + 1e-12);
    }

    #[test]
    fn minami_tally_moment_dominates_tail(xs in prop::collection::vec(0u32..8, 1..200), m in 0u32..3) {
        let mut t = anderson_core::process::MinamiTally::default();
        for &x in &xs {
            t.absorb_count(x, m);
        }
        prop_assert!(t.tail <= t.moment_sum);
        prop_assert_eq!(t.tail, xs.iter().filter(|&&x| x > m).count() as u64);
    }
}
