//! Problem instances: TSP with time windows (TSPTW) and TSP with draft limits
//! (TSPDL), their generators and their file formats.
//!
//! Node 0 is always the depot. Coordinates are normalized to the unit square;
//! TSPTW windows are normalized so that the depot deadline is exactly 1, and
//! travel time between two nodes is their normalized distance multiplied by
//! [`TsptwInstance::time_scale`] (one time unit equals one raw distance unit
//! divided by the depot deadline).

mod format;
mod generate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{parse_dumas, parse_dumas_raw, parse_instance, read_dataset, serialize_instance, write_dataset};
pub use generate::{
    estimate_tn, gen_raw_tsptw, gen_tspdl, gen_tsptw, normalize_tsptw, tn, tspdl_draft_feasible, HARD_ETA, RHO,
    TN_SAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardness {
    Easy,
    Medium,
    Hard,
    /// Parsed from an external benchmark file.
    Benchmark,
}

impl Hardness {
    pub fn as_str(self) -> &'static str {
        match self {
            Hardness::Easy => "easy",
            Hardness::Medium => "medium",
            Hardness::Hard => "hard",
            Hardness::Benchmark => "benchmark",
        }
    }
}

impl std::str::FromStr for Hardness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Hardness::Easy),
            "medium" => Ok(Hardness::Medium),
            "hard" => Ok(Hardness::Hard),
            "benchmark" => Ok(Hardness::Benchmark),
            other => Err(Error::InvalidConfig(format!("unknown hardness `{other}`"))),
        }
    }
}

impl std::fmt::Display for Hardness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Tsptw,
    Tspdl,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tsptw => "tsptw",
            Variant::Tspdl => "tspdl",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsptw" => Ok(Variant::Tsptw),
            "tspdl" => Ok(Variant::Tspdl),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense symmetric matrix over all nodes, depot included.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Matrix {
    size: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn euclidean(coords: &[[f64; 2]], scale: f64) -> Self {
        let size = coords.len();
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                let d = (dx * dx + dy * dy).sqrt() * scale;
                data[i * size + j] = d;
                data[j * size + i] = d;
            }
        }
        Matrix { size, data }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

/// Unnormalized TSPTW data: coordinates in `[0, 100]^2` and windows in raw
/// distance units. A depot deadline of `f64::INFINITY` means "derive it".
#[derive(Debug, Clone, PartialEq)]
pub struct RawTsptw {
    pub coords: Vec<[f64; 2]>,
    pub tw_lo: Vec<f64>,
    pub tw_hi: Vec<f64>,
    pub hardness: Hardness,
    pub seed: u64,
}

impl RawTsptw {
    pub fn n(&self) -> usize {
        self.coords.len().saturating_sub(1)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let dx = self.coords[i][0] - self.coords[j][0];
        let dy = self.coords[i][1] - self.coords[j][1];
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct TsptwInstance {
    coords: Vec<[f64; 2]>,
    tw_lo: Vec<f64>,
    tw_hi: Vec<f64>,
    time_scale: f64,
    hardness: Hardness,
    seed: u64,
    dist: Matrix,
    travel: Matrix,
}

impl PartialEq for TsptwInstance {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
            && self.tw_lo == other.tw_lo
            && self.tw_hi == other.tw_hi
            && self.time_scale == other.time_scale
            && self.hardness == other.hardness
            && self.seed == other.seed
    }
}

impl TsptwInstance {
    pub fn new(
        coords: Vec<[f64; 2]>,
        tw_lo: Vec<f64>,
        tw_hi: Vec<f64>,
        time_scale: f64,
        hardness: Hardness,
        seed: u64,
    ) -> Result<Self> {
        let size = coords.len();
        if size < 2 {
            return Err(Error::InvalidInstance(
                "at least one customer besides the depot is required".into(),
            ));
        }
        if tw_lo.len() != size || tw_hi.len() != size {
            return Err(Error::InvalidInstance(format!(
                "{size} coordinates but {} lower and {} upper window bounds",
                tw_lo.len(),
                tw_hi.len()
            )));
        }
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "time scale must be positive and finite, got {time_scale}"
            )));
        }
        for (i, c) in coords.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::InvalidInstance(format!("node {i}: non-finite coordinate")));
            }
        }
        for i in 0..size {
            let (lo, hi) = (tw_lo[i], tw_hi[i]);
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::InvalidInstance(format!("node {i}: invalid window [{lo}, {hi}]")));
            }
        }
        let dist = Matrix::euclidean(&coords, 1.0);
        let travel = Matrix::euclidean(&coords, time_scale);
        Ok(TsptwInstance {
            coords,
            tw_lo,
            tw_hi,
            time_scale,
            hardness,
            seed,
            dist,
            travel,
        })
    }

    /// Customer count (depot excluded).
    pub fn n(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn tw_lo(&self) -> &[f64] {
        &self.tw_lo
    }

    pub fn tw_hi(&self) -> &[f64] {
        &self.tw_hi
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn hardness(&self) -> Hardness {
        self.hardness
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    /// Travel time in the normalized time unit of the windows.
    #[inline]
    pub fn travel(&self, i: usize, j: usize) -> f64 {
        self.travel.get(i, j)
    }
}

#[derive(Debug, Clone)]
pub struct TspdlInstance {
    coords: Vec<[f64; 2]>,
    demand: Vec<u32>,
    draft: Vec<u32>,
    hardness: Hardness,
    seed: u64,
    total_demand: u32,
    dist: Matrix,
}

impl PartialEq for TspdlInstance {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
            && self.demand == other.demand
            && self.draft == other.draft
            && self.hardness == other.hardness
            && self.seed == other.seed
    }
}

impl TspdlInstance {
    pub fn new(
        coords: Vec<[f64; 2]>,
        demand: Vec<u32>,
        draft: Vec<u32>,
        hardness: Hardness,
        seed: u64,
    ) -> Result<Self> {
        let size = coords.len();
        if size < 2 {
            return Err(Error::InvalidInstance(
                "at least one customer besides the depot is required".into(),
            ));
        }
        if demand.len() != size || draft.len() != size {
            return Err(Error::InvalidInstance(format!(
                "{size} coordinates but {} demands and {} drafts",
                demand.len(),
                draft.len()
            )));
        }
        if demand[0] != 0 {
            return Err(Error::InvalidInstance("depot demand must be zero".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::InvalidInstance(format!("node {i}: non-finite coordinate")));
            }
        }
        let total_demand: u32 = demand.iter().sum();
        for i in 0..size {
            if draft[i] < demand[i] {
                return Err(Error::InvalidInstance(format!(
                    "node {i}: draft {} below demand {}",
                    draft[i], demand[i]
                )));
            }
        }
        let dist = Matrix::euclidean(&coords, 1.0);
        Ok(TspdlInstance {
            coords,
            demand,
            draft,
            hardness,
            seed,
            total_demand,
            dist,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn demand(&self) -> &[u32] {
        &self.demand
    }

    pub fn draft(&self) -> &[u32] {
        &self.draft
    }

    pub fn total_demand(&self) -> u32 {
        self.total_demand
    }

    pub fn hardness(&self) -> Hardness {
        self.hardness
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    /// True when every customer demand is 1 (the case the exact draft oracle covers).
    pub fn has_unit_demands(&self) -> bool {
        self.demand[1..].iter().all(|&d| d == 1)
    }

    pub(crate) fn check_unit_demands(&self) -> Result<()> {
        match self.demand[1..].iter().position(|&d| d != 1) {
            Some(k) => Err(Error::NonUnitDemand {
                node: k + 1,
                demand: self.demand[k + 1],
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Tsptw(TsptwInstance),
    Tspdl(TspdlInstance),
}

impl From<TsptwInstance> for Instance {
    fn from(i: TsptwInstance) -> Self {
        Instance::Tsptw(i)
    }
}

impl From<TspdlInstance> for Instance {
    fn from(i: TspdlInstance) -> Self {
        Instance::Tspdl(i)
    }
}

impl Instance {
    pub fn variant(&self) -> Variant {
        match self {
            Instance::Tsptw(_) => Variant::Tsptw,
            Instance::Tspdl(_) => Variant::Tspdl,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Instance::Tsptw(i) => i.n(),
            Instance::Tspdl(i) => i.n(),
        }
    }

    /// Node count including the depot.
    pub fn size(&self) -> usize {
        self.n() + 1
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        match self {
            Instance::Tsptw(i) => i.coords(),
            Instance::Tspdl(i) => i.coords(),
        }
    }

    pub fn hardness(&self) -> Hardness {
        match self {
            Instance::Tsptw(i) => i.hardness(),
            Instance::Tspdl(i) => i.hardness(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Instance::Tsptw(i) => i.seed(),
            Instance::Tspdl(i) => i.seed(),
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match self {
            Instance::Tsptw(inst) => inst.dist(i, j),
            Instance::Tspdl(inst) => inst.dist(i, j),
        }
    }

    pub fn as_tsptw(&self) -> Option<&TsptwInstance> {
        match self {
            Instance::Tsptw(i) => Some(i),
            Instance::Tspdl(_) => None,
        }
    }

    pub fn as_tspdl(&self) -> Option<&TspdlInstance> {
        match self {
            Instance::Tspdl(i) => Some(i),
            Instance::Tsptw(_) => None,
        }
    }

    /// Generates one instance of the requested variant and hardness.
    pub fn generate(variant: Variant, n: usize, hardness: Hardness, seed: u64) -> Result<Self> {
        match variant {
            Variant::Tsptw => gen_tsptw(n, hardness, seed).map(Instance::Tsptw),
            Variant::Tspdl => gen_tspdl(n, hardness, seed).map(Instance::Tspdl),
        }
    }
}

/// Generates `count` instances with seeds `seed, seed + 1, ...`, in parallel.
pub fn generate_set(variant: Variant, n: usize, hardness: Hardness, count: usize, seed: u64) -> Result<Vec<Instance>> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|k| Instance::generate(variant, n, hardness, seed.wrapping_add(k)))
        .collect()
}
