//! Event-driven simulator of the interval-coarsening process: repeatedly
//! merge the globally smallest interval with j partners drawn with
//! probability p_j — uniformly random partners in the mean-field variant,
//! nearest ring neighbors in the true one-dimensional variant.
//!
//! Minimum extraction uses a bucket queue over length (no full ordering
//! is ever needed), partner sampling a flat alive-list with swap-remove;
//! both are amortized O(1) per event.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::kernel::Kernel;

/// Identifier of the RNG algorithm, recorded in outputs for
/// reproducibility across platforms.
pub const RNG_ALGORITHM: &str = "chacha12";

const BUCKETS_PER_BASE: f64 = 1024.0;
const POPULATION_FLOOR: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McVariant {
    /// Partners drawn uniformly at random (the regime the kinetic
    /// equation describes).
    MeanField,
    /// Partners are the nearest neighbors on a ring, alternating sides
    /// (a fair coin decides the odd side).
    Ring,
}

impl McVariant {
    pub fn name(&self) -> &'static str {
        match self {
            McVariant::MeanField => "mean-field",
            McVariant::Ring => "ring",
        }
    }
}

/// Initial length sampler; every admissible sampler produces values >= 1.
#[derive(Debug, Clone, Copy)]
pub enum SamplerSpec {
    Constant(f64),
    Uniform(f64, f64),
}

impl SamplerSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            SamplerSpec::Constant(v) if v >= 1.0 => Ok(()),
            SamplerSpec::Uniform(a, b) if a >= 1.0 && b > a => Ok(()),
            _ => Err(Error::Config(
                "sampler may emit interval lengths below 1".into(),
            )),
        }
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> f64 {
        match *self {
            SamplerSpec::Constant(v) => v,
            SamplerSpec::Uniform(a, b) => a + (b - a) * rng.random::<f64>(),
        }
    }
}

/// Report of a simulation run.
#[derive(Debug, Clone, Copy)]
pub struct RunReport {
    pub events: u64,
    pub population: usize,
    /// True when the run stopped at the population floor instead of the
    /// requested cutoff.
    pub early_stop: bool,
}

/// The multiset of interval lengths plus the running cutoff and RNG
/// state.
#[derive(Debug, Clone)]
pub struct McEnsemble {
    variant: McVariant,
    seed: u64,
    rng: ChaCha12Rng,
    event_count: u64,

    lengths: Vec<f64>,
    alive: Vec<u32>,
    pos_in_alive: Vec<u32>,
    next: Vec<u32>,
    prev: Vec<u32>,

    buckets: Vec<Vec<u32>>,
    slot_bucket: Vec<(u32, u32)>,
    bucket_base: f64,
    bucket_width: f64,
    first_nonempty: usize,

    cutoff: f64,
    total: f64,
    total_comp: f64,
}

impl McEnsemble {
    /// Draw `count` i.i.d. lengths and set the cutoff to 1.
    pub fn init(count: usize, sampler: SamplerSpec, seed: u64, variant: McVariant) -> Result<Self> {
        if count < 10 {
            return Err(Error::Config(format!("count = {count} < 10")));
        }
        sampler.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let lengths: Vec<f64> = (0..count).map(|_| sampler.draw(&mut rng)).collect();
        let mut ens = McEnsemble {
            variant,
            seed,
            rng,
            event_count: 0,
            lengths: Vec::new(),
            alive: Vec::new(),
            pos_in_alive: Vec::new(),
            next: Vec::new(),
            prev: Vec::new(),
            buckets: Vec::new(),
            slot_bucket: Vec::new(),
            bucket_base: 1.0,
            bucket_width: 1.0 / BUCKETS_PER_BASE,
            first_nonempty: 0,
            cutoff: 1.0,
            total: 0.0,
            total_comp: 0.0,
        };
        for (i, &len) in lengths.iter().enumerate() {
            ens.lengths.push(len);
            ens.alive.push(i as u32);
            ens.pos_in_alive.push(i as u32);
            ens.slot_bucket.push((0, 0));
            ens.next.push(((i + 1) % count) as u32);
            ens.prev.push(((i + count - 1) % count) as u32);
            ens.add_total(len);
        }
        ens.rebucket();
        Ok(ens)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variant(&self) -> McVariant {
        self.variant
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn population(&self) -> usize {
        self.alive.len()
    }

    /// Current minimal allowed length (the running minimum).
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Compensated total length.
    pub fn total_length(&self) -> f64 {
        self.total + self.total_comp
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.alive.iter().map(|&s| self.lengths[s as usize]).collect()
    }

    fn add_total(&mut self, x: f64) {
        // Neumaier compensated summation.
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.total_comp += (self.total - t) + x;
        } else {
            self.total_comp += (x - t) + self.total;
        }
        self.total = t;
    }

    fn bucket_index(&self, len: f64) -> usize {
        (((len - self.bucket_base) / self.bucket_width).max(0.0)) as usize
    }

    fn rebucket(&mut self) {
        self.bucket_base = self.cutoff;
        self.bucket_width = self.cutoff / BUCKETS_PER_BASE;
        self.buckets.clear();
        self.first_nonempty = 0;
        let alive = self.alive.clone();
        for &slot in &alive {
            self.bucket_insert(slot);
        }
    }

    fn bucket_insert(&mut self, slot: u32) {
        let idx = self.bucket_index(self.lengths[slot as usize]);
        if idx >= self.buckets.len() {
            self.buckets.resize_with(idx + 1, Vec::new);
        }
        self.buckets[idx].push(slot);
        self.slot_bucket[slot as usize] = (idx as u32, (self.buckets[idx].len() - 1) as u32);
        if idx < self.first_nonempty {
            self.first_nonempty = idx;
        }
    }

    fn bucket_remove(&mut self, slot: u32) {
        let (b, pos) = self.slot_bucket[slot as usize];
        let (b, pos) = (b as usize, pos as usize);
        let moved = self.buckets[b].swap_remove(pos);
        debug_assert_eq!(moved, slot);
        if pos < self.buckets[b].len() {
            let other = self.buckets[b][pos];
            self.slot_bucket[other as usize] = (b as u32, pos as u32);
        }
    }

    fn alive_remove(&mut self, slot: u32) {
        let pos = self.pos_in_alive[slot as usize] as usize;
        let moved = self.alive.swap_remove(pos);
        debug_assert_eq!(moved, slot);
        if pos < self.alive.len() {
            let other = self.alive[pos];
            self.pos_in_alive[other as usize] = pos as u32;
        }
    }

    /// Exact global minimum: scan the first nonempty bucket.
    fn peek_min(&mut self) -> u32 {
        while self.first_nonempty < self.buckets.len()
            && self.buckets[self.first_nonempty].is_empty()
        {
            self.first_nonempty += 1;
        }
        let bucket = &self.buckets[self.first_nonempty];
        let mut best = bucket[0];
        let mut best_len = self.lengths[best as usize];
        for &slot in &bucket[1..] {
            let len = self.lengths[slot as usize];
            if len < best_len {
                best = slot;
                best_len = len;
            }
        }
        best
    }

    fn remove_interval(&mut self, slot: u32) {
        self.bucket_remove(slot);
        self.alive_remove(slot);
        let x = self.lengths[slot as usize];
        self.add_total(-x);
    }

    fn insert_interval(&mut self, len: f64, after_prev: u32, before_next: u32) -> u32 {
        let slot = self.lengths.len() as u32;
        self.lengths.push(len);
        self.pos_in_alive.push(self.alive.len() as u32);
        self.alive.push(slot);
        self.slot_bucket.push((0, 0));
        self.next.push(before_next);
        self.prev.push(after_prev);
        self.next[after_prev as usize] = slot;
        self.prev[before_next as usize] = slot;
        self.bucket_insert(slot);
        self.add_total(len);
        slot
    }

    fn draw_partner_count(&mut self, kernel: &Kernel) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (j, &p) in kernel.weights().iter().enumerate() {
            acc += p;
            if u < acc {
                return j + 1;
            }
        }
        kernel.weights().len()
    }

    /// One merge event. Returns false when the population floor blocks it.
    fn step(&mut self, kernel: &Kernel) -> bool {
        if self.alive.len() <= POPULATION_FLOOR {
            return false;
        }
        let j = self.draw_partner_count(kernel);
        if self.alive.len() <= j + 1 {
            return false;
        }
        let min_slot = self.peek_min();
        let mut merged = self.lengths[min_slot as usize];
        self.remove_interval(min_slot);

        match self.variant {
            McVariant::MeanField => {
                let mut chosen: Vec<u32> = Vec::with_capacity(j);
                while chosen.len() < j {
                    let pick = self.alive[self.rng.random_range(0..self.alive.len())];
                    if !chosen.contains(&pick) {
                        chosen.push(pick);
                    }
                }
                for slot in chosen {
                    merged += self.lengths[slot as usize];
                    self.remove_interval(slot);
                }
                // Ring links are meaningless in this variant but kept
                // coherent for the shared bookkeeping.
                let left = self.prev[min_slot as usize];
                let right = self.next[min_slot as usize];
                self.insert_interval(merged, left, right);
            }
            McVariant::Ring => {
                let mut left = self.prev[min_slot as usize];
                let mut right = self.next[min_slot as usize];
                let mut take_right = j / 2;
                let mut take_left = j / 2;
                if j % 2 == 1 {
                    if self.rng.random::<bool>() {
                        take_right += 1;
                    } else {
                        take_left += 1;
                    }
                }
                for _ in 0..take_right {
                    let slot = right;
                    right = self.next[slot as usize];
                    merged += self.lengths[slot as usize];
                    self.remove_interval(slot);
                }
                for _ in 0..take_left {
                    let slot = left;
                    left = self.prev[slot as usize];
                    merged += self.lengths[slot as usize];
                    self.remove_interval(slot);
                }
                self.insert_interval(merged, left, right);
            }
        }
        self.event_count += 1;

        let min_slot = self.peek_min();
        let new_min = self.lengths[min_slot as usize];
        debug_assert!(new_min >= self.cutoff - 1e-12);
        self.cutoff = new_min;
        if self.bucket_index(self.cutoff) > 2 * BUCKETS_PER_BASE as usize {
            self.rebucket();
        }
        true
    }

    /// Run merge events until the cutoff reaches `target_cutoff` or the
    /// population floor is hit.
    pub fn run_until(&mut self, kernel: &Kernel, target_cutoff: f64) -> Result<RunReport> {
        if target_cutoff <= self.cutoff {
            return Err(Error::Config(format!(
                "target cutoff {target_cutoff} not beyond current {}",
                self.cutoff
            )));
        }
        let start_events = self.event_count;
        let mut early_stop = false;
        while self.cutoff < target_cutoff {
            if !self.step(kernel) {
                early_stop = true;
                break;
            }
        }
        Ok(RunReport {
            events: self.event_count - start_events,
            population: self.alive.len(),
            early_stop,
        })
    }

    /// Empirical CDF of lengths rescaled by the cutoff, on [1, ∞).
    pub fn empirical_rescaled(&self) -> EmpiricalCdf {
        let mut ys: Vec<f64> = self
            .alive
            .iter()
            .map(|&s| self.lengths[s as usize] / self.cutoff)
            .collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalCdf { ys }
    }
}

/// Sorted rescaled lengths y = x / cutoff.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    ys: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_sorted(ys: Vec<f64>) -> Self {
        EmpiricalCdf { ys }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.ys
    }

    pub fn value_at(&self, y: f64) -> f64 {
        let idx = self.ys.partition_point(|&v| v <= y);
        idx as f64 / self.ys.len() as f64
    }
}

/// Kolmogorov-Smirnov distance between an empirical CDF and a reference
/// density of mass 1 (CDF by trapezoid accumulation, capped at 1 beyond
/// the grid).
pub fn ks_distance(empirical: &EmpiricalCdf, reference: &GridDensity) -> Result<f64> {
    if (reference.mass() - 1.0).abs() > 1e-4 {
        return Err(Error::Domain(format!(
            "reference mass {} is not 1",
            reference.mass()
        )));
    }
    if empirical.is_empty() {
        return Err(Error::Config("empty empirical sample".into()));
    }
    let m = reference.len();
    let h = reference.h();
    let mut cum = vec![0.0; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + 0.5 * h * (reference.values()[i - 1] + reference.values()[i]);
    }
    let cdf_at = |y: f64| -> f64 {
        if y <= 1.0 {
            return 0.0;
        }
        let t = (y - 1.0) / h;
        if t >= (m - 1) as f64 {
            return 1.0;
        }
        let i = t.floor() as usize;
        let frac = t - i as f64;
        (cum[i] * (1.0 - frac) + cum[i + 1] * frac).min(1.0)
    };
    let n = empirical.len() as f64;
    let mut d = 0.0f64;
    for (i, &y) in empirical.samples().iter().enumerate() {
        let f = cdf_at(y);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    Ok(d)
}
