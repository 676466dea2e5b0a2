use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Hardness, RawTsptw, TspdlInstance, TsptwInstance};
use crate::error::{Error, Result};

/// Coordinate scale of raw instances (`[0, RHO]^2`).
pub const RHO: f64 = 100.0;
/// Half-width control of the permutation-based (Hard) windows, raw units.
pub const HARD_ETA: f64 = 50.0;
/// Monte-Carlo sample count behind [`tn`].
pub const TN_SAMPLES: usize = 100_000;
const TN_SEED: u64 = 0x5EED_7A11_0000_0001;

/// Mean length of a closed tour through `n + 1` uniform points of the unit
/// square visited in random order.
pub fn estimate_tn(n: usize, samples: usize, seed: u64) -> f64 {
    if n == 0 || samples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let first: [f64; 2] = [rng.random(), rng.random()];
        let mut prev = first;
        let mut len = 0.0;
        for _ in 0..n {
            let p: [f64; 2] = [rng.random(), rng.random()];
            len += ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            prev = p;
        }
        len += ((first[0] - prev[0]).powi(2) + (first[1] - prev[1]).powi(2)).sqrt();
        total += len;
    }
    total / samples as f64
}

/// Cached [`estimate_tn`] with the fixed internal seed and [`TN_SAMPLES`] samples.
pub fn tn(n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().expect("T_N cache poisoned").get(&n) {
        return v;
    }
    let v = estimate_tn(n, TN_SAMPLES, TN_SEED);
    cache.lock().expect("T_N cache poisoned").insert(n, v);
    v
}

fn window_width_range(hardness: Hardness) -> Option<(f64, f64)> {
    match hardness {
        Hardness::Easy => Some((0.5, 0.75)),
        Hardness::Medium => Some((0.1, 0.2)),
        _ => None,
    }
}

/// Raw-scale TSPTW draw. The depot deadline is left infinite for
/// [`normalize_tsptw`] to derive.
pub fn gen_raw_tsptw(n: usize, hardness: Hardness, seed: u64) -> Result<RawTsptw> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..=n)
        .map(|_| [RHO * rng.random::<f64>(), RHO * rng.random::<f64>()])
        .collect();
    let mut tw_lo = vec![0.0; n + 1];
    let mut tw_hi = vec![f64::INFINITY; n + 1];

    match hardness {
        Hardness::Easy | Hardness::Medium => {
            let (alpha, beta) = window_width_range(hardness).expect("easy/medium");
            let horizon = RHO * tn(n);
            for i in 1..=n {
                let lo = horizon * rng.random::<f64>();
                let width = horizon * rng.random_range(alpha..=beta);
                tw_lo[i] = lo;
                tw_hi[i] = lo + width;
            }
        }
        Hardness::Hard => {
            let mut order: Vec<usize> = (1..=n).collect();
            order.shuffle(&mut rng);
            let raw = RawTsptw {
                coords: coords.clone(),
                tw_lo: Vec::new(),
                tw_hi: Vec::new(),
                hardness,
                seed,
            };
            let mut psi = 0.0;
            let mut prev = 0;
            for &node in &order {
                psi += raw.dist(prev, node);
                prev = node;
                let lo = rng.random_range((psi - HARD_ETA)..=psi);
                let hi = rng.random_range(psi..=(psi + HARD_ETA));
                tw_lo[node] = lo.max(0.0);
                tw_hi[node] = hi;
            }
        }
        Hardness::Benchmark => {
            return Err(Error::InvalidConfig(
                "benchmark instances are parsed, not generated".into(),
            ))
        }
    }

    Ok(RawTsptw {
        coords,
        tw_lo,
        tw_hi,
        hardness,
        seed,
    })
}

pub fn gen_tsptw(n: usize, hardness: Hardness, seed: u64) -> Result<TsptwInstance> {
    normalize_tsptw(&gen_raw_tsptw(n, hardness, seed)?)
}

/// Scales coordinates by `1 / RHO` and windows by the depot deadline `u_0`.
///
/// `u_0` is the raw depot deadline when it is finite (benchmark files), and
/// `max_i (u_i + dist(i, 0))` otherwise.
pub fn normalize_tsptw(raw: &RawTsptw) -> Result<TsptwInstance> {
    let size = raw.coords.len();
    if size < 2 {
        return Err(Error::InvalidInstance("a lone depot cannot be normalized".into()));
    }
    if raw.tw_lo.len() != size || raw.tw_hi.len() != size {
        return Err(Error::InvalidInstance("window vectors do not match node count".into()));
    }
    for i in 0..size {
        let (lo, hi) = (raw.tw_lo[i], raw.tw_hi[i]);
        let hi_ok = hi.is_finite() || (i == 0 && hi == f64::INFINITY);
        if !(lo.is_finite() && lo >= 0.0 && hi_ok && lo <= hi) {
            return Err(Error::InvalidInstance(format!(
                "node {i}: invalid raw window [{lo}, {hi}]"
            )));
        }
    }
    let u0 = if raw.tw_hi[0].is_finite() {
        raw.tw_hi[0]
    } else {
        (1..size)
            .map(|i| raw.tw_hi[i] + raw.dist(i, 0))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if !(u0 > 0.0) {
        return Err(Error::InvalidInstance(format!(
            "depot deadline must be positive, got {u0}"
        )));
    }
    let coords = raw.coords.iter().map(|c| [c[0] / RHO, c[1] / RHO]).collect();
    let tw_lo = raw.tw_lo.iter().map(|&l| l / u0).collect();
    let mut tw_hi: Vec<f64> = raw.tw_hi.iter().map(|&u| u / u0).collect();
    tw_hi[0] = 1.0;
    TsptwInstance::new(coords, tw_lo, tw_hi, RHO / u0, raw.hardness, raw.seed)
}

fn mutation_percent(hardness: Hardness) -> Result<usize> {
    match hardness {
        Hardness::Medium => Ok(75),
        Hardness::Hard => Ok(90),
        other => Err(Error::InvalidConfig(format!(
            "TSPDL generation supports medium and hard, not {other}"
        ))),
    }
}

/// Unit-demand TSPDL draw: a fixed share of customers get a draft limit below
/// the total demand, redrawn until a feasible tour is guaranteed.
pub fn gen_tspdl(n: usize, hardness: Hardness, seed: u64) -> Result<TspdlInstance> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let sigma = mutation_percent(hardness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..=n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let total = n as u32;
    let mut demand = vec![1u32; n + 1];
    demand[0] = 0;
    let mutated = if n >= 2 { n * sigma / 100 } else { 0 };

    let mut draft = vec![total; n + 1];
    loop {
        let values: Vec<u32> = (0..mutated).map(|_| rng.random_range(1..total)).collect();
        let mut customers: Vec<usize> = (1..=n).collect();
        customers.shuffle(&mut rng);
        draft.iter_mut().for_each(|d| *d = total);
        for (&node, &v) in customers.iter().zip(&values) {
            draft[node] = v;
        }
        if tspdl_draft_feasible(&draft, &demand)? {
            break;
        }
    }
    TspdlInstance::new(coords, demand, draft, hardness, seed)
}

/// Pigeonhole test for unit demands: with unit loads the customer in tour
/// position `k` carries load `k`, so a feasible order exists iff at most `k`
/// customers have draft `<= k` for every `k`, and the depot admits the full
/// load on return.
pub fn tspdl_draft_feasible(draft: &[u32], demand: &[u32]) -> Result<bool> {
    if draft.len() != demand.len() || draft.is_empty() {
        return Err(Error::InvalidInstance("draft/demand length mismatch".into()));
    }
    if demand[0] != 0 {
        return Err(Error::NonUnitDemand {
            node: 0,
            demand: demand[0],
        });
    }
    if let Some(k) = demand[1..].iter().position(|&d| d != 1) {
        return Err(Error::NonUnitDemand {
            node: k + 1,
            demand: demand[k + 1],
        });
    }
    let n = draft.len() - 1;
    if (draft[0] as usize) < n {
        return Ok(false);
    }
    let mut count = vec![0usize; n + 1];
    for &d in &draft[1..] {
        count[(d as usize).min(n)] += 1;
    }
    let mut cumulative = 0;
    for (k, c) in count.iter().enumerate().take(n) {
        cumulative += c;
        if cumulative > k {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tn_degenerate_is_zero() {
        assert_eq!(estimate_tn(0, 1000, 7), 0.0);
    }

    #[test]
    fn tn_20_matches_reported_value() {
        let v = estimate_tn(20, 100_000, 11);
        assert!((v - 10.9).abs() < 0.1, "T_20 = {v}");
    }

    #[test]
    fn tn_is_deterministic() {
        assert_eq!(estimate_tn(10, 500, 3), estimate_tn(10, 500, 3));
    }

    #[test]
    fn easy_window_widths_follow_law() {
        let t = RHO * tn(50);
        for seed in 0..20 {
            let raw = gen_raw_tsptw(50, Hardness::Easy, seed).unwrap();
            for i in 1..=50 {
                let r = (raw.tw_hi[i] - raw.tw_lo[i]) / t;
                assert!((0.5 - 1e-12..=0.75 + 1e-12).contains(&r), "ratio {r}");
                assert!(raw.tw_lo[i] >= 0.0 && raw.tw_lo[i] <= t);
            }
        }
    }

    #[test]
    fn medium_window_widths_follow_law() {
        let t = RHO * tn(20);
        let raw = gen_raw_tsptw(20, Hardness::Medium, 99).unwrap();
        for i in 1..=20 {
            let r = (raw.tw_hi[i] - raw.tw_lo[i]) / t;
            assert!((0.1 - 1e-12..=0.2 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn hard_windows_are_clamped() {
        for seed in 0..50 {
            let raw = gen_raw_tsptw(10, Hardness::Hard, seed).unwrap();
            assert!(raw.tw_lo.iter().all(|&l| l >= 0.0));
            assert!(raw.tw_lo.iter().zip(&raw.tw_hi).all(|(l, u)| l <= u));
        }
    }

    #[test]
    fn normalize_single_customer() {
        let raw = RawTsptw {
            coords: vec![[0.0, 0.0], [6.0, 8.0]],
            tw_lo: vec![0.0, 0.0],
            tw_hi: vec![f64::INFINITY, 40.0],
            hardness: Hardness::Easy,
            seed: 0,
        };
        let inst = normalize_tsptw(&raw).unwrap();
        assert_eq!(inst.tw_hi()[0], 1.0);
        assert!((inst.tw_hi()[1] - 0.8).abs() < 1e-15);
        assert!((inst.time_scale() - 2.0).abs() < 1e-15);
        // 10 raw distance units = 0.2 of the depot deadline
        assert!((inst.travel(0, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_lone_depot() {
        let raw = RawTsptw {
            coords: vec![[0.0, 0.0]],
            tw_lo: vec![0.0],
            tw_hi: vec![f64::INFINITY],
            hardness: Hardness::Easy,
            seed: 0,
        };
        assert!(matches!(normalize_tsptw(&raw), Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn generated_windows_are_normalized() {
        for h in [Hardness::Easy, Hardness::Medium, Hardness::Hard] {
            let inst = gen_tsptw(30, h, 5).unwrap();
            assert_eq!(inst.tw_hi()[0], 1.0);
            for i in 0..=30 {
                assert!(0.0 <= inst.tw_lo()[i] && inst.tw_lo()[i] <= inst.tw_hi()[i]);
                assert!(inst.tw_hi()[i] <= 1.0);
                assert!(inst.coords()[i].iter().all(|&c| (0.0..=1.0).contains(&c)));
            }
            // depot deadline is never binding on a direct return
            for i in 1..=30 {
                assert!(inst.tw_hi()[i] + inst.travel(i, 0) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn tspdl_mutation_count() {
        for seed in 0..10 {
            let inst = gen_tspdl(50, Hardness::Medium, seed).unwrap();
            let mutated = inst.draft()[1..].iter().filter(|&&d| d < 50).count();
            assert_eq!(mutated, 50 * 75 / 100);
            assert_eq!(inst.draft()[0], 50);
            let inst = gen_tspdl(50, Hardness::Hard, seed).unwrap();
            let mutated = inst.draft()[1..].iter().filter(|&&d| d < 50).count();
            assert_eq!(mutated, 45);
        }
    }

    #[test]
    fn tspdl_rejects_easy() {
        assert!(gen_tspdl(10, Hardness::Easy, 0).is_err());
    }

    #[test]
    fn draft_feasibility_fixtures() {
        let demand = [0, 1, 1, 1, 1];
        assert!(tspdl_draft_feasible(&[4, 1, 2, 3, 4], &demand).unwrap());
        assert!(!tspdl_draft_feasible(&[4, 1, 1, 3, 4], &demand).unwrap());
        assert!(!tspdl_draft_feasible(&[3, 4, 4, 4, 4], &demand).unwrap());
    }

    #[test]
    fn draft_feasibility_refuses_non_unit_demand() {
        let err = tspdl_draft_feasible(&[4, 2, 4], &[0, 2, 1]).unwrap_err();
        assert!(matches!(err, Error::NonUnitDemand { node: 1, demand: 2 }));
    }
}
