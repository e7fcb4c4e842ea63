//! Non-autonomous iterated function systems: level-indexed map collections,
//! words selecting one map per level, compositions along words, Bowen
//! metrics, and blocked/shifted systems.
//!
//! Levels are 1-based. A schedule is a finite prefix of levels followed by a
//! periodic tail, which keeps `#(I^{m,n})` computable in closed form.

use std::ops::Range;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, NaifsError, Result};
use crate::maps::{MapRef, MapSpec};
use crate::spaces::{Point, Space};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Repeat the last prefix level forever.
    Constant,
    /// Cycle through the last `p` prefix levels forever.
    Repeat { period: usize },
}

impl Tail {
    fn period(&self) -> usize {
        match self {
            Tail::Constant => 1,
            Tail::Repeat { period } => *period,
        }
    }
}

/// Serializable form of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub levels: Vec<Vec<MapSpec>>,
    pub tail: Tail,
}

#[derive(Clone, Debug)]
pub struct NaifsSchedule {
    space: Space,
    prefix: Vec<Vec<MapRef>>,
    tail: Tail,
}

impl NaifsSchedule {
    pub fn new(space: Space, prefix: Vec<Vec<MapRef>>, tail: Tail) -> Result<Self> {
        if prefix.is_empty() {
            return invalid("schedule needs at least one level");
        }
        if let Some(j) = prefix.iter().position(|l| l.is_empty()) {
            return invalid(format!("level {} is empty", j + 1));
        }
        let period = tail.period();
        if period == 0 || period > prefix.len() {
            return invalid(format!(
                "tail period {period} must be between 1 and the prefix length {}",
                prefix.len()
            ));
        }
        for (j, level) in prefix.iter().enumerate() {
            for m in level {
                if !m.supports(space) {
                    return invalid(format!(
                        "map {} at level {} does not act on {space:?}",
                        m.meta().name,
                        j + 1
                    ));
                }
            }
        }
        Ok(NaifsSchedule {
            space,
            prefix,
            tail,
        })
    }

    pub fn from_spec(space: Space, spec: &ScheduleSpec) -> Result<Self> {
        let prefix = spec
            .levels
            .iter()
            .map(|l| l.iter().map(MapRef::new).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        NaifsSchedule::new(space, prefix, spec.tail)
    }

    /// The same maps at every level.
    pub fn autonomous(space: Space, maps: &[MapSpec]) -> Result<Self> {
        NaifsSchedule::from_spec(
            space,
            &ScheduleSpec {
                levels: vec![maps.to_vec()],
                tail: Tail::Constant,
            },
        )
    }

    /// Levels cycle through `levels` forever.
    pub fn periodic(space: Space, levels: Vec<Vec<MapSpec>>) -> Result<Self> {
        let period = levels.len();
        NaifsSchedule::from_spec(
            space,
            &ScheduleSpec {
                levels,
                tail: Tail::Repeat { period },
            },
        )
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            levels: self
                .prefix
                .iter()
                .map(|l| l.iter().map(|m| m.spec().clone()).collect())
                .collect(),
            tail: self.tail,
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    /// Position in `prefix` of level `j` (1-based).
    fn slot(&self, j: usize) -> usize {
        assert!(j >= 1, "levels are 1-based");
        let len = self.prefix.len();
        if j <= len {
            return j - 1;
        }
        let p = self.tail.period();
        len - p + (j - len - 1) % p
    }

    pub fn level(&self, j: usize) -> &[MapRef] {
        &self.prefix[self.slot(j)]
    }

    pub fn level_size(&self, j: usize) -> usize {
        self.level(j).len()
    }

    /// Number of levels after which every level is a repeat.
    pub fn distinct_levels(&self) -> usize {
        self.prefix.len()
    }

    /// Largest Lipschitz constant among the maps of level `j`.
    pub fn level_lipschitz(&self, j: usize) -> f64 {
        self.level(j).iter().map(|m| m.lipschitz()).fold(0.0, f64::max)
    }

    /// `∏_{j=m}^{m+n-1}` of the per-level Lipschitz bound.
    pub fn lipschitz_growth(&self, m: usize, n: usize) -> f64 {
        (m..m + n).map(|j| self.level_lipschitz(j)).product()
    }

    pub fn all_maps(&self) -> impl Iterator<Item = &MapRef> {
        self.prefix.iter().flatten()
    }

    /// Every map is an expanding local diffeomorphism.
    pub fn is_uniformly_expanding(&self) -> bool {
        self.all_maps().all(|m| m.is_expanding())
    }

    /// Common expansion factor and injectivity constant.
    pub fn expansion_constants(&self) -> Option<(f64, f64)> {
        if !self.is_uniformly_expanding() {
            return None;
        }
        let sigma = self
            .all_maps()
            .map(|m| m.meta().expanding.as_ref().unwrap().sigma)
            .fold(f64::INFINITY, f64::min);
        let rho = self
            .all_maps()
            .map(|m| m.meta().expanding.as_ref().unwrap().rho)
            .fold(f64::INFINITY, f64::min);
        Some((sigma, rho))
    }

    /// Every map is monotone.
    pub fn is_monotone(&self) -> bool {
        self.all_maps().all(|m| m.meta().monotone)
    }

    /// Stable content hash of the space and the schedule description.
    pub fn system_hash(&self) -> String {
        let payload = serde_json::to_string(&(self.space, self.spec()))
            .expect("schedule description serializes");
        let digest = Sha256::digest(payload.as_bytes());
        digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }

    /// `#(I^{m,n})`.
    pub fn word_count(&self, m: usize, n: usize) -> BigUint {
        (m..m + n).fold(BigUint::from(1u32), |acc, j| acc * self.level_size(j))
    }

    pub fn check_word(&self, w: &Word) -> Result<()> {
        if w.start < 1 {
            return invalid("word start level must be >= 1");
        }
        for (i, &s) in w.symbols.iter().enumerate() {
            let size = self.level_size(w.start + i);
            if s as usize >= size {
                return invalid(format!(
                    "symbol {s} out of range at level {} (size {size})",
                    w.start + i
                ));
            }
        }
        Ok(())
    }

    /// Map chosen by `w` at its `i`-th position.
    #[inline]
    pub fn word_map(&self, w: &Word, i: usize) -> &MapRef {
        &self.level(w.start + i)[w.symbols[i] as usize]
    }

    /// Writes the orbit `x, φ_w^{m,1}(x), …, φ_w^{m,k}(x)` into `out`
    /// (`(k+1)·dim` values).
    pub fn orbit_into(&self, w: &Word, k: usize, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out[..d].copy_from_slice(x);
        for i in 0..k {
            let (done, rest) = out.split_at_mut((i + 1) * d);
            self.word_map(w, i).apply(&done[i * d..], &mut rest[..d]);
        }
    }

    /// `φ_w^{m,k}(x)`.
    pub fn apply_word(&self, w: &Word, k: usize, x: &Point) -> Result<Point> {
        self.check_word(w)?;
        self.space.check(x)?;
        if k > w.len() {
            return invalid(format!("k = {k} exceeds word length {}", w.len()));
        }
        let mut cur = x.clone();
        let mut next = x.clone();
        for i in 0..k {
            self.word_map(w, i).apply(cur.coords(), next.coords_mut());
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn orbit(&self, w: &Word, x: &Point) -> Result<Vec<Point>> {
        self.check_word(w)?;
        self.space.check(x)?;
        let d = self.space.dim();
        let mut buf = vec![0.0; (w.len() + 1) * d];
        self.orbit_into(w, w.len(), x.coords(), &mut buf);
        Ok(buf.chunks_exact(d).map(Point::new).collect())
    }

    /// `d_{w,k}(x, y) = max_{0≤j≤k} d(φ_w^{m,j}x, φ_w^{m,j}y)`.
    pub fn bowen_distance(&self, w: &Word, k: usize, x: &Point, y: &Point) -> Result<f64> {
        if k > w.len() {
            return invalid(format!("k = {k} exceeds word length {}", w.len()));
        }
        let ox = self.orbit(&w.prefix(k), x)?;
        let oy = self.orbit(&w.prefix(k), y)?;
        Ok(ox
            .iter()
            .zip(&oy)
            .map(|(a, b)| self.space.dist(a.coords(), b.coords()))
            .fold(0.0, f64::max))
    }

    /// Membership in the open dynamical ball `B(center; w, k, eps)`.
    pub fn in_dynamical_ball(
        &self,
        w: &Word,
        k: usize,
        center: &Point,
        eps: f64,
        y: &Point,
    ) -> Result<bool> {
        if !(eps > 0.0) {
            return invalid("ball radius must be positive");
        }
        Ok(self.bowen_distance(w, k, center, y)? < eps)
    }

    /// The system `{Φ^(j)}_{j≥k}`, re-indexed from 1.
    pub fn shifted(&self, k: usize) -> Result<NaifsSchedule> {
        if k < 1 {
            return invalid("shift must be >= 1");
        }
        let remaining = self.prefix.len().saturating_sub(k - 1);
        let len = remaining.max(self.tail.period());
        let prefix = (0..len).map(|i| self.level(k + i).to_vec()).collect();
        NaifsSchedule::new(self.space, prefix, self.tail)
    }

    /// The blocked system `Φⁿ`: level `j` holds one composite map per word in
    /// `I^{(j-1)n+1, n}`, enumerated in lexicographic word order.
    pub fn blocked(&self, n: usize) -> Result<NaifsSchedule> {
        if n < 1 {
            return invalid("block length must be >= 1");
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let p = self.tail.period();
        let periodic_from = self.prefix.len() - p + 1;
        // First blocked level whose underlying levels are all in the tail.
        let first_tail_block = (periodic_from.saturating_sub(1)).div_ceil(n) + 1;
        let block_period = p / gcd(p, n);
        let levels = first_tail_block + block_period - 1;
        let mut prefix = Vec::with_capacity(levels);
        for j in 1..=levels {
            let start = (j - 1) * n + 1;
            let count = self.word_count(start, n);
            let count: usize = count
                .try_into()
                .map_err(|_| NaifsError::InvalidInput("blocked level too large".into()))?;
            if count > 1 << 16 {
                return invalid(format!("blocked level would hold {count} maps"));
            }
            let maps = (0..count)
                .map(|idx| {
                    let w = self.word_from_index(start, n, idx as u128);
                    let parts: Vec<MapRef> =
                        (0..n).map(|i| self.word_map(&w, i).clone()).collect();
                    MapRef::compose(&parts)
                })
                .collect();
            prefix.push(maps);
        }
        let tail = if block_period == 1 {
            Tail::Constant
        } else {
            Tail::Repeat {
                period: block_period,
            }
        };
        NaifsSchedule::new(self.space, prefix, tail)
    }

    /// Word number `idx` of `I^{m,n}` in lexicographic order (first symbol
    /// most significant).
    pub fn word_from_index(&self, m: usize, n: usize, mut idx: u128) -> Word {
        let mut symbols = vec![0u32; n];
        for i in (0..n).rev() {
            let size = self.level_size(m + i) as u128;
            symbols[i] = (idx % size) as u32;
            idx /= size;
        }
        Word { start: m, symbols }
    }

    pub fn words(&self, m: usize, n: usize, budget: usize, seed: u64) -> Result<WordEnsemble> {
        WordEnsemble::new(self, m, n, budget, seed)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub start: usize,
    pub symbols: Vec<u32>,
}

impl Word {
    pub fn new(start: usize, symbols: Vec<u32>) -> Self {
        Word { start, symbols }
    }

    /// Constant word of symbol 0 (the only word of single-map levels).
    pub fn zeros(start: usize, n: usize) -> Self {
        Word::new(start, vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `w|_k`: the first `k` symbols.
    pub fn prefix(&self, k: usize) -> Word {
        Word::new(self.start, self.symbols[..k].to_vec())
    }

    /// The word remaining after the first `k` symbols, starting at level
    /// `start + k`.
    pub fn suffix(&self, k: usize) -> Word {
        Word::new(self.start + k, self.symbols[k..].to_vec())
    }
}

/// Derives an independent 64-bit seed for a labelled stage.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

/// The words of `I^{m,n}`: all of them, or `count` i.i.d. uniform samples.
#[derive(Clone, Debug)]
pub struct WordEnsemble {
    start: usize,
    len: usize,
    mode: EnsembleMode,
    size: BigUint,
    level_sizes: Vec<u32>,
}

impl WordEnsemble {
    pub fn new(s: &NaifsSchedule, m: usize, n: usize, budget: usize, seed: u64) -> Result<Self> {
        if m < 1 {
            return invalid("word start level must be >= 1");
        }
        if budget < 1 {
            return invalid("word budget must be >= 1");
        }
        let size = s.word_count(m, n);
        let mode = if size <= BigUint::from(budget) {
            EnsembleMode::Exhaustive
        } else {
            EnsembleMode::Sampled {
                count: budget,
                seed,
            }
        };
        Ok(WordEnsemble {
            start: m,
            len: n,
            mode,
            size,
            level_sizes: (m..m + n).map(|j| s.level_size(j) as u32).collect(),
        })
    }

    pub fn mode(&self) -> &EnsembleMode {
        &self.mode
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.mode, EnsembleMode::Sampled { .. })
    }

    /// Exact `#(I^{m,n})`.
    pub fn ensemble_size(&self) -> &BigUint {
        &self.size
    }

    pub fn word_len(&self) -> usize {
        self.len
    }

    /// Number of words this ensemble yields.
    pub fn count(&self) -> usize {
        match self.mode {
            EnsembleMode::Exhaustive => {
                usize::try_from(&self.size).expect("exhaustive ensembles fit the budget")
            }
            EnsembleMode::Sampled { count, .. } => count,
        }
    }

    /// The `i`-th word. Sampled words depend only on `(seed, i)`, so any
    /// partition of `0..count()` reproduces the same words.
    pub fn word(&self, i: usize) -> Word {
        match self.mode {
            EnsembleMode::Exhaustive => {
                let mut idx = i as u128;
                let mut symbols = vec![0u32; self.len];
                for k in (0..self.len).rev() {
                    let size = self.level_sizes[k] as u128;
                    symbols[k] = (idx % size) as u32;
                    idx /= size;
                }
                Word::new(self.start, symbols)
            }
            EnsembleMode::Sampled { seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "word", i as u64));
                let symbols = self
                    .level_sizes
                    .iter()
                    .map(|&size| rng.random_range(0..size))
                    .collect();
                Word::new(self.start, symbols)
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Word> + '_ {
        (0..self.count()).map(move |i| self.word(i))
    }

    /// Splits `0..count()` into at most `parts` contiguous ranges.
    pub fn partitions(&self, parts: usize) -> Vec<Range<usize>> {
        let n = self.count();
        let parts = parts.clamp(1, n.max(1));
        let chunk = n.div_ceil(parts);
        (0..parts)
            .map(|p| (p * chunk).min(n)..((p + 1) * chunk).min(n))
            .filter(|r| !r.is_empty())
            .collect()
    }
}
