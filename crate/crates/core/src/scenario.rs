//! Residential scenario generation and the versioned scenario file format.
//!
//! The generator jitters a representative per-slot consumption interval for
//! every consumer, derives box bounds per peak segment, draws a starting
//! profile inside the interval, and sets the budget to that profile's total.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::Scenario;
use crate::error::{DsmError, Result};
use crate::feasible::ConsumerSpec;
use crate::model::PriceCurve;

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped 24-slot base interval, first slot = 8-9 AM.
pub const DEFAULT_BASE_INTERVAL_CSV: &str = include_str!("../data/base_interval.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    OffPeak,
    MidPeak,
    OnPeak,
}

impl Segment {
    /// Tariff segment of the clock hour `[hour, hour + 1)`.
    pub fn of_hour(hour: u32) -> Segment {
        match hour % 24 {
            0..=6 => Segment::OffPeak,
            16..=21 => Segment::OnPeak,
            _ => Segment::MidPeak,
        }
    }
}

/// Segment of every slot of a 24-slot day whose first slot starts at `start_hour`.
pub fn classify_segments(horizon: usize, start_hour: u32) -> Result<Vec<Segment>> {
    if horizon != 24 {
        return Err(DsmError::arg(format!(
            "hourly segment classification needs H = 24 (got {horizon}); supply an explicit segment map"
        )));
    }
    Ok((0..24).map(|s| Segment::of_hour(start_hour + s)).collect())
}

/// Lower and upper per-slot consumption of a representative consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseInterval {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BaseInterval {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        DsmError::check_len("base interval", low.len(), high.len())?;
        for (h, (l, u)) in low.iter().zip(&high).enumerate() {
            if !(*l >= 0.0 && l <= u && u.is_finite()) {
                return Err(DsmError::arg(format!(
                    "base interval slot {}: need 0 <= low <= high, got ({l}, {u})",
                    h + 1
                )));
            }
        }
        Ok(Self { low, high })
    }

    pub fn horizon(&self) -> usize {
        self.low.len()
    }

    pub fn default_residential() -> Self {
        Self::from_csv(DEFAULT_BASE_INTERVAL_CSV).expect("shipped base interval is well formed")
    }

    /// `slot,low,high` rows with 1-based consecutive slots; a header line is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut low = Vec::new();
        let mut high = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| DsmError::Parse {
                location: format!("line {}", i + 1),
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected `slot,low,high`, got {line:?}")));
            }
            if fields[0] == "slot" {
                continue;
            }
            let slot: usize = fields[0].parse().map_err(|_| err(format!("bad slot {:?}", fields[0])))?;
            if slot != low.len() + 1 {
                return Err(err(format!("expected slot {}, got {slot}", low.len() + 1)));
            }
            let l: f64 = fields[1].parse().map_err(|_| err(format!("bad low value {:?}", fields[1])))?;
            let u: f64 = fields[2].parse().map_err(|_| err(format!("bad high value {:?}", fields[2])))?;
            low.push(l);
            high.push(u);
        }
        if low.is_empty() {
            return Err(DsmError::Parse {
                location: "end of file".into(),
                message: "no slots".into(),
            });
        }
        Self::new(low, high)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_file(path)?)
    }
}

/// Price coefficient `a_h` per tariff segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentPrices {
    pub off_peak: f64,
    pub mid_peak: f64,
    pub on_peak: f64,
}

impl SegmentPrices {
    pub fn get(&self, segment: Segment) -> f64 {
        match segment {
            Segment::OffPeak => self.off_peak,
            Segment::MidPeak => self.mid_peak,
            Segment::OnPeak => self.on_peak,
        }
    }
}

fn default_consumers() -> usize {
    50
}
fn default_horizon() -> usize {
    24
}
fn default_start_hour() -> u32 {
    8
}
fn default_jitter() -> f64 {
    0.1
}
fn default_off_peak_max() -> [f64; 2] {
    [0.4, 0.6]
}
fn default_a() -> SegmentPrices {
    SegmentPrices {
        off_peak: 0.003,
        mid_peak: 0.004,
        on_peak: 0.005,
    }
}
fn default_b() -> f64 {
    1.2
}

/// Everything the generator needs besides the base interval. Missing JSON
/// fields take the residential defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecipe {
    #[serde(default = "default_consumers")]
    pub consumers: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bound jitter is uniform on `[0, jitter]`, drawn separately for low and high.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Interval for the off-peak upper bounds.
    #[serde(default = "default_off_peak_max")]
    pub off_peak_max: [f64; 2],
    /// Clock hour at which slot 1 starts; used when `segments` is absent.
    #[serde(default = "default_start_hour")]
    pub start_hour: u32,
    /// Explicit per-slot segment map; required when `horizon != 24`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Segment>>,
    #[serde(default = "default_a")]
    pub a: SegmentPrices,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

impl Default for GenerationRecipe {
    fn default() -> Self {
        Self {
            consumers: default_consumers(),
            horizon: default_horizon(),
            seed: 0,
            jitter: default_jitter(),
            off_peak_max: default_off_peak_max(),
            start_hour: default_start_hour(),
            segments: None,
            a: default_a(),
            b: default_b(),
            c: 0.0,
        }
    }
}

impl GenerationRecipe {
    pub fn segment_map(&self) -> Result<Vec<Segment>> {
        match &self.segments {
            Some(map) => {
                DsmError::check_len("segment map", self.horizon, map.len())?;
                Ok(map.clone())
            }
            None => classify_segments(self.horizon, self.start_hour),
        }
    }

    pub fn price_curve(&self) -> Result<PriceCurve> {
        let segments = self.segment_map()?;
        let h = segments.len();
        PriceCurve::new(
            segments.iter().map(|s| self.a.get(*s)).collect(),
            vec![self.b; h],
            vec![self.c; h],
        )
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub scenario: Scenario,
    pub initial: Vec<Vec<f64>>,
    pub segments: Vec<Segment>,
}

impl GeneratedScenario {
    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile::from_scenario(&self.scenario, Some(self.initial.clone()), Some(self.segments.clone()))
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn generate(recipe: &GenerationRecipe, base: &BaseInterval) -> Result<GeneratedScenario> {
    if recipe.consumers == 0 {
        return Err(DsmError::arg("recipe needs at least one consumer"));
    }
    if base.horizon() != recipe.horizon {
        return Err(DsmError::arg(format!(
            "base interval has {} slots but the recipe horizon is {}",
            base.horizon(),
            recipe.horizon
        )));
    }
    if !(recipe.jitter >= 0.0 && recipe.jitter.is_finite()) {
        return Err(DsmError::arg("jitter must be a nonnegative number"));
    }
    let [op_lo, op_hi] = recipe.off_peak_max;
    if !(op_lo >= 0.0 && op_lo <= op_hi && op_hi.is_finite()) {
        return Err(DsmError::arg("off-peak maximum interval must satisfy 0 <= lo <= hi"));
    }
    let segments = recipe.segment_map()?;
    let curve = recipe.price_curve()?;
    let h_len = recipe.horizon;

    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut specs = Vec::with_capacity(recipe.consumers);
    let mut initial = Vec::with_capacity(recipe.consumers);
    for _ in 0..recipe.consumers {
        let mut low = Vec::with_capacity(h_len);
        let mut high = Vec::with_capacity(h_len);
        for h in 0..h_len {
            let l = base.low[h] + uniform(&mut rng, 0.0, recipe.jitter);
            let u = (base.high[h] + uniform(&mut rng, 0.0, recipe.jitter)).max(l);
            low.push(l);
            high.push(u);
        }
        let peak_cap = high.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut q_min = Vec::with_capacity(h_len);
        let mut q_max = Vec::with_capacity(h_len);
        let mut start = Vec::with_capacity(h_len);
        for h in 0..h_len {
            let cap = match segments[h] {
                Segment::OffPeak => uniform(&mut rng, op_lo, op_hi),
                Segment::MidPeak | Segment::OnPeak => peak_cap,
            };
            let lo = low[h].min(cap);
            q_min.push(lo);
            q_max.push(cap);
            start.push(uniform(&mut rng, lo, high[h].min(cap)));
        }
        let energy: f64 = start.iter().sum();
        specs.push(ConsumerSpec::new(q_min, q_max, energy)?);
        initial.push(start);
    }
    Ok(GeneratedScenario {
        scenario: Scenario::new(specs, curve)?,
        initial,
        segments,
    })
}

/// On-disk scenario. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub horizon: usize,
    pub price: PriceCurve,
    pub consumers: Vec<ConsumerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Segment>>,
}

impl ScenarioFile {
    pub fn from_scenario(
        scenario: &Scenario,
        initial: Option<Vec<Vec<f64>>>,
        segments: Option<Vec<Segment>>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            horizon: scenario.horizon(),
            price: scenario.curve().clone(),
            consumers: scenario.specs().to_vec(),
            initial,
            segments,
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        DsmError::check_len("price curve", self.horizon, self.price.horizon())?;
        let scenario = Scenario::new(self.consumers.clone(), self.price.clone())?;
        if let Some(init) = &self.initial {
            scenario.check_profiles(init, 1e-8)?;
        }
        if let Some(seg) = &self.segments {
            DsmError::check_len("segment map", self.horizon, seg.len())?;
        }
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| DsmError::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(DsmError::Parse {
                location: "field `schema_version`".into(),
                message: format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    file.schema_version
                ),
            });
        }
        file.to_scenario()?;
        Ok(file)
    }

    /// SHA-256 of the canonical (compact) JSON form.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|source| DsmError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DsmError::Io {
        path: path.display().to_string(),
        source,
    })
}
