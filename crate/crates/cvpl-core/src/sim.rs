//! Deterministic marketing-touchpoint data generator.
//!
//! Records are drawn through a five-stage conditional chain:
//! demographics, then ad channel given (region, age, gender), then response
//! lag given (channel, age), then product given (channel, demographics), and
//! finally purchase time assembled from the base date, the lag, and weekly /
//! diurnal calendar effects. Conditioning is realized with per-group
//! multiplicative tilt factors drawn once per configuration, so the generated
//! data carries real cross-attribute dependence while marginals stay close to
//! their configured weights.
//!
//! Everything is a pure function of (config, seed): generation uses one
//! sequential seeded stream, anomaly injection uses per-row substreams.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use thiserror::Error;

use crate::data::{AttrDef, AttrKind, AttrRole, AttributeSchema, DataError, Dataset, Value};
use crate::rng::{substream, tag};

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid simulator config: field `{field}`: {detail}")]
    InvalidConfig { field: &'static str, detail: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Gender labels and marginal weights (internal to the generator).
const GENDERS: [&str; 3] = ["M", "F", "Other"];
const GENDER_WEIGHTS: [f64; 3] = [0.48, 0.48, 0.04];

/// Purchase-place labels and base weights, tilted per channel.
const PLACES: [&str; 4] = ["Online", "Store", "Mobile", "Phone"];
const PLACE_BASE_WEIGHTS: [f64; 4] = [0.45, 0.30, 0.20, 0.05];

/// Coarse-region marginal weights (same length as `region_level1`).
const REGION_L1_WEIGHTS: [f64; 4] = [0.35, 0.25, 0.25, 0.15];
/// Fine-region marginal weights (same length as `region_level2`).
const REGION_L2_WEIGHTS: [f64; 3] = [0.50, 0.30, 0.20];

/// Log-tilt standard deviations for the conditional stages. Channel and
/// product tilts decompose additively over the conditioning factors, so the
/// dependence survives marginalizing over the other factors.
const CHANNEL_TILT_SD_REGION: f64 = 0.45;
const CHANNEL_TILT_SD_DECADE: f64 = 0.25;
const CHANNEL_TILT_SD_GENDER: f64 = 0.25;
const PRODUCT_TILT_SD_CHANNEL: f64 = 0.45;
const PRODUCT_TILT_SD_GENDER: f64 = 0.20;
const PRODUCT_TILT_SD_DECADE: f64 = 0.20;
const PLACE_TILT_SD: f64 = 0.50;

/// Response-lag gamma shape; the mean is channel-specific.
const LAG_GAMMA_SHAPE: f64 = 2.0;
/// Relative lag-mean increase per year of age above 40.
const LAG_AGE_SLOPE: f64 = 0.01;

/// Anomaly channel label, used only by [`inject_anomalies`].
pub const ANOMALY_CHANNEL: &str = "Affiliate";
/// Products with popularity rank above this count as long-tail anomalies.
pub const LONG_TAIL_RANK: usize = 45;

/// Generator configuration. Defaults follow the standard experiment setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_records: usize,
    pub seed: u64,
    pub age_mean: f64,
    pub age_std: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub region_level1: Vec<String>,
    pub region_level2: Vec<String>,
    pub channels: Vec<String>,
    pub channel_weights: Vec<f64>,
    pub n_products: usize,
    pub product_zipf_alpha: f64,
    /// Base date t0, epoch seconds.
    pub t0: i64,
    /// Mean response lag per channel, in days.
    pub lag_mean_days: Vec<f64>,
    /// 24 hourly weights.
    pub diurnal_profile: Vec<f64>,
    /// 7 daily weights, Monday first.
    pub weekly_profile: Vec<f64>,
    /// Gaussian jitter on the purchase time, seconds.
    pub time_noise_sd: f64,
    /// Fraction of rows receiving one injected anomaly.
    pub outlier_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_records: 10_000,
            seed: 42,
            age_mean: 42.0,
            age_std: 15.0,
            age_min: 18.0,
            age_max: 80.0,
            region_level1: vec!["North".into(), "South".into(), "East".into(), "West".into()],
            region_level2: vec!["Urban".into(), "Suburban".into(), "Rural".into()],
            channels: vec!["Search".into(), "Social".into(), "Video".into(), "Display".into(), "Email".into()],
            channel_weights: vec![0.3, 0.25, 0.2, 0.15, 0.1],
            n_products: 50,
            product_zipf_alpha: 1.5,
            // 2024-01-01 00:00:00 UTC (a Monday).
            t0: 1_704_067_200,
            lag_mean_days: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            diurnal_profile: vec![
                1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 5.0, 7.0, 8.0, 8.0, 8.0, 9.0, 9.0, 8.0, 8.0, 8.0,
                9.0, 10.0, 10.0, 8.0, 6.0, 4.0, 2.0,
            ],
            weekly_profile: vec![1.0, 0.9, 0.9, 1.0, 1.1, 1.4, 1.3],
            time_noise_sd: 900.0,
            outlier_fraction: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |field: &'static str, detail: String| Err(SimError::InvalidConfig { field, detail });
        if self.n_records == 0 {
            return fail("n_records", "must be positive".into());
        }
        if !(self.age_min < self.age_mean && self.age_mean < self.age_max) {
            return fail("age_mean", "requires age_min < age_mean < age_max".into());
        }
        if self.age_std <= 0.0 {
            return fail("age_std", "must be positive".into());
        }
        if self.channels.is_empty() || self.channels.len() != self.channel_weights.len() {
            return fail("channel_weights", "must match channels in length".into());
        }
        let wsum: f64 = self.channel_weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return fail("channel_weights", format!("must sum to 1, got {wsum}"));
        }
        if self.channel_weights.iter().any(|&w| w <= 0.0) {
            return fail("channel_weights", "weights must be positive".into());
        }
        if self.region_level1.is_empty() || self.region_level1.len() != REGION_L1_WEIGHTS.len() {
            return fail("region_level1", format!("expected {} labels", REGION_L1_WEIGHTS.len()));
        }
        if self.region_level2.is_empty() || self.region_level2.len() != REGION_L2_WEIGHTS.len() {
            return fail("region_level2", format!("expected {} labels", REGION_L2_WEIGHTS.len()));
        }
        if self.n_products == 0 {
            return fail("n_products", "must be positive".into());
        }
        if self.product_zipf_alpha <= 0.0 {
            return fail("product_zipf_alpha", "must be positive".into());
        }
        if self.lag_mean_days.len() != self.channels.len() {
            return fail("lag_mean_days", "must match channels in length".into());
        }
        if self.lag_mean_days.iter().any(|&m| m <= 0.0) {
            return fail("lag_mean_days", "means must be positive".into());
        }
        if self.diurnal_profile.len() != 24 || self.diurnal_profile.iter().any(|&w| w <= 0.0) {
            return fail("diurnal_profile", "expected 24 positive weights".into());
        }
        if self.weekly_profile.len() != 7 || self.weekly_profile.iter().any(|&w| w <= 0.0) {
            return fail("weekly_profile", "expected 7 positive weights".into());
        }
        if self.time_noise_sd < 0.0 {
            return fail("time_noise_sd", "must be non-negative".into());
        }
        if !(0.0..=0.5).contains(&self.outlier_fraction) {
            return fail("outlier_fraction", "must lie in [0, 0.5]".into());
        }
        Ok(())
    }
}

/// Schema of the generated table.
pub fn touchpoint_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        AttrDef::new("person_id", AttrKind::Categorical, AttrRole::HiddenId),
        AttrDef::new("age", AttrKind::Numeric, AttrRole::QuasiIdentifier),
        AttrDef::new("gender", AttrKind::Categorical, AttrRole::QuasiIdentifier),
        AttrDef::new("region", AttrKind::Categorical, AttrRole::QuasiIdentifier),
        AttrDef::new("ad_channel", AttrKind::Categorical, AttrRole::Analytical),
        AttrDef::new("brand_product", AttrKind::Categorical, AttrRole::Analytical),
        AttrDef::new("purchase_place", AttrKind::Categorical, AttrRole::Analytical),
        AttrDef::new("purchase_time", AttrKind::Timestamp, AttrRole::Analytical),
        AttrDef::new("days_after_ad", AttrKind::Numeric, AttrRole::Analytical),
    ])
    .expect("static schema is valid")
}

/// Product label for a popularity rank (1 = most popular).
pub fn product_label(rank: usize) -> String {
    format!("P{rank:02}")
}

/// Inverse-CDF draw from unnormalized positive weights.
fn draw_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Per-level log tilts for one demographic factor: `levels x outcomes`.
fn draw_logs(seed: u64, label: &str, n_levels: usize, n_outcomes: usize, sd: f64) -> Vec<f64> {
    let mut rng = substream(seed, &[tag(label)]);
    let normal = Normal::new(0.0, sd).expect("valid sd");
    (0..n_levels * n_outcomes).map(|_| normal.sample(&mut rng)).collect()
}

/// Row-normalized conditional distribution table over `groups x outcomes`,
/// rescaled by iterative proportional fitting so the mixture over the given
/// group counts reproduces the base marginal exactly.
struct Conditional {
    n_outcomes: usize,
    probs: Vec<f64>,
}

impl Conditional {
    fn build(mut weights: Vec<f64>, n_outcomes: usize, base: &[f64], group_counts: &[f64]) -> Self {
        let n_groups = weights.len() / n_outcomes;
        debug_assert_eq!(group_counts.len(), n_groups);
        let total: f64 = group_counts.iter().sum();
        let base_sum: f64 = base.iter().sum();
        let target: Vec<f64> = base.iter().map(|b| b / base_sum).collect();
        let mut probs = vec![0.0; weights.len()];
        for _ in 0..200 {
            for g in 0..n_groups {
                let row = &mut weights[g * n_outcomes..(g + 1) * n_outcomes];
                let s: f64 = row.iter().sum();
                for (p, w) in probs[g * n_outcomes..(g + 1) * n_outcomes].iter_mut().zip(row.iter()) {
                    *p = w / s;
                }
            }
            let mut mixture = vec![0.0; n_outcomes];
            for g in 0..n_groups {
                let share = group_counts[g] / total;
                for (m, p) in mixture.iter_mut().zip(&probs[g * n_outcomes..(g + 1) * n_outcomes]) {
                    *m += share * p;
                }
            }
            let mut worst: f64 = 0.0;
            for o in 0..n_outcomes {
                let factor = if mixture[o] > 0.0 { target[o] / mixture[o] } else { 1.0 };
                worst = worst.max((factor - 1.0).abs());
                for g in 0..n_groups {
                    weights[g * n_outcomes + o] *= factor;
                }
            }
            if worst < 1e-13 {
                break;
            }
        }
        for g in 0..n_groups {
            let row = &mut weights[g * n_outcomes..(g + 1) * n_outcomes];
            let s: f64 = row.iter().sum();
            for (p, w) in probs[g * n_outcomes..(g + 1) * n_outcomes].iter_mut().zip(row.iter()) {
                *p = w / s;
            }
        }
        Self { n_outcomes, probs }
    }

    fn row(&self, group: usize) -> &[f64] {
        &self.probs[group * self.n_outcomes..(group + 1) * self.n_outcomes]
    }
}

fn age_decade_index(age: f64, age_min: f64, age_max: f64) -> usize {
    let lo = (age_min / 10.0).floor() as i64;
    let hi = (age_max / 10.0).floor() as i64;
    let d = (age / 10.0).floor() as i64;
    (d.clamp(lo, hi) - lo) as usize
}

/// Weekday index with Monday = 0, computed in UTC.
pub fn day_of_week(ts: i64) -> i64 {
    // 1970-01-01 was a Thursday (index 3).
    (ts.div_euclid(86_400) + 3).rem_euclid(7)
}

/// Hour of day in UTC.
pub fn hour_of_day(ts: i64) -> i64 {
    ts.rem_euclid(86_400) / 3_600
}

/// Generate a dataset from the five-stage conditional chain.
///
/// Fully deterministic given the config (including its seed); calling twice
/// yields byte-identical datasets.
pub fn generate(config: &SimConfig) -> Result<Dataset, SimError> {
    config.validate()?;
    let n_decades = age_decade_index(config.age_max, config.age_min, config.age_max) + 1;
    let n_channels = config.channels.len();
    let n_regions1 = config.region_level1.len();
    let n_genders = GENDERS.len();

    let mut rng = substream(config.seed, &[tag("rows")]);
    let age_normal = Normal::new(config.age_mean, config.age_std).expect("valid age params");
    let time_noise = Normal::new(0.0, config.time_noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");

    // Pass 1: demographics for every record.
    let mut demo = Vec::with_capacity(config.n_records);
    for _ in 0..config.n_records {
        let age = loop {
            let a = age_normal.sample(&mut rng).round();
            if a >= config.age_min && a <= config.age_max {
                break a;
            }
        };
        let gender = draw_weighted(&mut rng, &GENDER_WEIGHTS);
        let region1 = draw_weighted(&mut rng, &REGION_L1_WEIGHTS[..n_regions1]);
        let region2 = draw_weighted(&mut rng, &REGION_L2_WEIGHTS[..config.region_level2.len()]);
        let decade = age_decade_index(age, config.age_min, config.age_max);
        demo.push((age, gender, region1, region2, decade));
    }

    // Conditional tables: additive log tilts per conditioning factor, fitted
    // so the mixture over the realized demographic counts reproduces the
    // configured marginals exactly.
    let chan_region = draw_logs(config.seed, "channel_tilt_region", n_regions1, n_channels, CHANNEL_TILT_SD_REGION);
    let chan_decade = draw_logs(config.seed, "channel_tilt_decade", n_decades, n_channels, CHANNEL_TILT_SD_DECADE);
    let chan_gender = draw_logs(config.seed, "channel_tilt_gender", n_genders, n_channels, CHANNEL_TILT_SD_GENDER);
    let n_cgroups = n_regions1 * n_decades * n_genders;
    let cgroup_of = |region1: usize, decade: usize, gender: usize| (region1 * n_decades + decade) * n_genders + gender;
    let mut cgroup_counts = vec![0.0; n_cgroups];
    for &(_, gender, region1, _, decade) in &demo {
        cgroup_counts[cgroup_of(region1, decade, gender)] += 1.0;
    }
    let mut chan_weights = vec![0.0; n_cgroups * n_channels];
    for r in 0..n_regions1 {
        for d in 0..n_decades {
            for s in 0..n_genders {
                let g = cgroup_of(r, d, s);
                for c in 0..n_channels {
                    let logt = chan_region[r * n_channels + c]
                        + chan_decade[d * n_channels + c]
                        + chan_gender[s * n_channels + c];
                    chan_weights[g * n_channels + c] = config.channel_weights[c] * logt.exp();
                }
            }
        }
    }
    let channel_cond = Conditional::build(chan_weights, n_channels, &config.channel_weights, &cgroup_counts);

    // Channels are drawn before products, so product group counts follow from
    // the channel conditional's expected composition; the exact counts are not
    // known yet. Expected counts are enough for marginal fitting.
    let zipf_base: Vec<f64> =
        (1..=config.n_products).map(|r| (r as f64).powf(-config.product_zipf_alpha)).collect();
    let prod_channel =
        draw_logs(config.seed, "product_tilt_channel", n_channels, config.n_products, PRODUCT_TILT_SD_CHANNEL);
    let prod_gender =
        draw_logs(config.seed, "product_tilt_gender", n_genders, config.n_products, PRODUCT_TILT_SD_GENDER);
    let prod_decade =
        draw_logs(config.seed, "product_tilt_decade", n_decades, config.n_products, PRODUCT_TILT_SD_DECADE);
    let n_pgroups = n_channels * n_genders * n_decades;
    let pgroup_of = |channel: usize, gender: usize, decade: usize| (channel * n_genders + gender) * n_decades + decade;
    let mut pgroup_counts = vec![0.0; n_pgroups];
    for &(_, gender, region1, _, decade) in &demo {
        let cond = channel_cond.row(cgroup_of(region1, decade, gender));
        for (c, p) in cond.iter().enumerate() {
            pgroup_counts[pgroup_of(c, gender, decade)] += p;
        }
    }
    let mut prod_weights = vec![0.0; n_pgroups * config.n_products];
    for c in 0..n_channels {
        for s in 0..n_genders {
            for d in 0..n_decades {
                let g = pgroup_of(c, s, d);
                for p in 0..config.n_products {
                    let logt = prod_channel[c * config.n_products + p]
                        + prod_gender[s * config.n_products + p]
                        + prod_decade[d * config.n_products + p];
                    prod_weights[g * config.n_products + p] = zipf_base[p] * logt.exp();
                }
            }
        }
    }
    let product_cond = Conditional::build(prod_weights, config.n_products, &zipf_base, &pgroup_counts);

    let place_logs = draw_logs(config.seed, "place_tilt", n_channels, PLACES.len(), PLACE_TILT_SD);
    let mut place_group_counts = vec![0.0; n_channels];
    for &(_, gender, region1, _, decade) in &demo {
        let cond = channel_cond.row(cgroup_of(region1, decade, gender));
        for (c, p) in cond.iter().enumerate() {
            place_group_counts[c] += p;
        }
    }
    let mut place_weights = vec![0.0; n_channels * PLACES.len()];
    for c in 0..n_channels {
        for k in 0..PLACES.len() {
            place_weights[c * PLACES.len() + k] =
                PLACE_BASE_WEIGHTS[k] * place_logs[c * PLACES.len() + k].exp();
        }
    }
    let place_cond = Conditional::build(place_weights, PLACES.len(), &PLACE_BASE_WEIGHTS, &place_group_counts);

    // Pass 2: behavioral attributes and purchase time.
    let mut rows = Vec::with_capacity(config.n_records);
    for (i, &(age, gender, region1, region2, decade)) in demo.iter().enumerate() {
        // Stage 2: channel | region, age, gender.
        let channel = draw_weighted(&mut rng, channel_cond.row(cgroup_of(region1, decade, gender)));

        // Stage 3: response lag | channel, age.
        let lag_mean =
            config.lag_mean_days[channel] * (1.0 + LAG_AGE_SLOPE * (age - 40.0).max(0.0));
        let gamma = Gamma::new(LAG_GAMMA_SHAPE, lag_mean / LAG_GAMMA_SHAPE).expect("valid gamma");
        let lag_days = (gamma.sample(&mut rng) * 1e6).round() / 1e6;

        // Stage 4: product and place | channel, demographics.
        let product = draw_weighted(&mut rng, product_cond.row(pgroup_of(channel, gender, decade)));
        let place = draw_weighted(&mut rng, place_cond.row(channel));

        // Stage 5: purchase time = t0 + lag + calendar effects.
        let base = config.t0 + (lag_days * 86_400.0).round() as i64;
        let mut day = base.div_euclid(86_400);
        let target_dow = draw_weighted(&mut rng, &config.weekly_profile) as i64;
        day += (target_dow - day_of_week(day * 86_400)).rem_euclid(7);
        let hour = draw_weighted(&mut rng, &config.diurnal_profile) as i64;
        let noise = time_noise.sample(&mut rng).round() as i64;
        let ts = (day * 86_400 + hour * 3_600 + 1_800 + noise).max(config.t0);

        rows.push(vec![
            Value::Text(i.to_string()),
            Value::Number(age),
            Value::Text(GENDERS[gender].to_string()),
            Value::Text(format!("{}/{}", config.region_level1[region1], config.region_level2[region2])),
            Value::Text(config.channels[channel].clone()),
            Value::Text(product_label(product + 1)),
            Value::Text(PLACES[place].to_string()),
            Value::Time(ts),
            Value::Number(lag_days),
        ]);
    }

    let ds = Dataset::new(
        Arc::new(touchpoint_schema()),
        rows,
        &format!("sim(n={}, seed={})", config.n_records, config.seed),
    )?;
    Ok(ds)
}

/// Generate and, when `outlier_fraction > 0`, inject anomalies in one step.
pub fn generate_with_anomalies(config: &SimConfig) -> Result<Dataset, SimError> {
    let ds = generate(config)?;
    if config.outlier_fraction > 0.0 {
        inject_anomalies(&ds, config.outlier_fraction, config.seed)
    } else {
        Ok(ds)
    }
}

/// Sample `k` distinct indices from `0..n` (partial Fisher-Yates), sorted.
fn sample_indices<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Modify exactly `round(p_out * n)` rows, each with one anomaly chosen
/// uniformly among rare channel, long-tail product, off-hours time, and lag
/// outlier. All other rows are byte-identical to the input.
pub fn inject_anomalies(dataset: &Dataset, p_out: f64, seed: u64) -> Result<Dataset, SimError> {
    if !(0.0..=0.5).contains(&p_out) {
        return Err(SimError::InvalidConfig { field: "outlier_fraction", detail: "must lie in [0, 0.5]".into() });
    }
    let n = dataset.n_rows();
    let k = (p_out * n as f64).round() as usize;
    if k == 0 {
        return Ok(dataset.clone());
    }
    let schema = dataset.schema();
    let col = |name: &str| schema.position(name).ok_or_else(|| SimError::InvalidConfig {
        field: "dataset",
        detail: format!("missing attribute {name:?}"),
    });
    let c_channel = col("ad_channel")?;
    let c_product = col("brand_product")?;
    let c_time = col("purchase_time")?;
    let c_lag = col("days_after_ad")?;
    let n_products: usize = dataset
        .rows()
        .iter()
        .filter_map(|r| r[c_product].as_text())
        .filter_map(|s| s.strip_prefix('P').and_then(|d| d.parse::<usize>().ok()))
        .max()
        .unwrap_or(LONG_TAIL_RANK + 5)
        .max(LONG_TAIL_RANK + 1);

    let mut pick_rng = substream(seed, &[tag("anomaly_rows")]);
    let chosen = sample_indices(&mut pick_rng, n, k);

    let mut rows = dataset.rows().to_vec();
    for &i in &chosen {
        let mut rng = substream(seed, &[tag("anomaly"), i as u64]);
        // Each arm avoids re-drawing the row's current value so that exactly
        // round(p_out * n) rows differ from the input.
        match rng.gen_range(0..4u8) {
            0 => {
                rows[i][c_channel] = Value::Text(ANOMALY_CHANNEL.to_string());
            }
            1 => {
                let current = rows[i][c_product]
                    .as_text()
                    .and_then(|s| s.strip_prefix('P'))
                    .and_then(|d| d.parse::<usize>().ok());
                let ranks: Vec<usize> =
                    (LONG_TAIL_RANK + 1..=n_products).filter(|r| Some(*r) != current).collect();
                let rank = ranks[rng.gen_range(0..ranks.len())];
                rows[i][c_product] = Value::Text(product_label(rank));
            }
            2 => {
                let ts = rows[i][c_time].as_time().unwrap_or(0);
                let current_hour = hour_of_day(ts);
                let hours: Vec<i64> = (2..=4).filter(|h| *h != current_hour).collect();
                let hour = hours[rng.gen_range(0..hours.len())];
                let within_hour = ts.rem_euclid(3_600);
                rows[i][c_time] = Value::Time(ts.div_euclid(86_400) * 86_400 + hour * 3_600 + within_hour);
            }
            _ => {
                let current = rows[i][c_lag].as_number().unwrap_or(f64::NAN);
                let days = if current == 0.0 {
                    60.0
                } else if current == 60.0 {
                    0.0
                } else if rng.gen::<bool>() {
                    0.0
                } else {
                    60.0
                };
                rows[i][c_lag] = Value::Number(days);
            }
        }
    }
    let out = dataset.with_rows(rows, &format!("{} + anomalies(p={p_out})", dataset.provenance()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ols_slope, spearman};
    use std::collections::HashMap;

    fn small_config(n: usize) -> SimConfig {
        SimConfig { n_records: n, ..SimConfig::default() }
    }

    #[test]
    fn ages_respect_bounds_at_default_scale() {
        let ds = generate(&SimConfig::default()).unwrap();
        assert_eq!(ds.n_rows(), 10_000);
        let age_col = ds.schema().position("age").unwrap();
        for row in ds.rows() {
            let age = row[age_col].as_number().unwrap();
            assert!((18.0..=80.0).contains(&age), "age {age} out of range");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config(500);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.rows(), b.rows());
    }

    #[test]
    fn channel_marginal_matches_weights_within_three_se() {
        let cfg = SimConfig::default();
        let ds = generate(&cfg).unwrap();
        let col = ds.schema().position("ad_channel").unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for row in ds.rows() {
            *counts.entry(row[col].as_text().unwrap()).or_default() += 1;
        }
        let n = ds.n_rows() as f64;
        for (label, &w) in cfg.channels.iter().zip(&cfg.channel_weights) {
            let p_hat = *counts.get(label.as_str()).unwrap_or(&0) as f64 / n;
            let se = (w * (1.0 - w) / n).sqrt();
            assert!(
                (p_hat - w).abs() <= 3.0 * se,
                "channel {label}: {p_hat} vs {w} (3se = {})",
                3.0 * se
            );
        }
    }

    #[test]
    fn channel_depends_on_region() {
        // Chi-square of channel x coarse region exceeds the 99th percentile
        // of chi-square with (5-1)(4-1) = 12 degrees of freedom (26.217).
        let ds = generate(&SimConfig::default()).unwrap();
        let c_chan = ds.schema().position("ad_channel").unwrap();
        let c_region = ds.schema().position("region").unwrap();
        let mut table: HashMap<(String, String), f64> = HashMap::new();
        let mut row_sum: HashMap<String, f64> = HashMap::new();
        let mut col_sum: HashMap<String, f64> = HashMap::new();
        for row in ds.rows() {
            let region1 = row[c_region].as_text().unwrap().split('/').next().unwrap().to_string();
            let chan = row[c_chan].as_text().unwrap().to_string();
            *table.entry((region1.clone(), chan.clone())).or_default() += 1.0;
            *row_sum.entry(region1).or_default() += 1.0;
            *col_sum.entry(chan).or_default() += 1.0;
        }
        let n = ds.n_rows() as f64;
        let mut chi2 = 0.0;
        for (r, rs) in &row_sum {
            for (c, cs) in &col_sum {
                let expected = rs * cs / n;
                let observed = table.get(&(r.clone(), c.clone())).copied().unwrap_or(0.0);
                chi2 += (observed - expected).powi(2) / expected;
            }
        }
        assert!(chi2 > 26.217, "chi-square {chi2} too small; conditional structure missing");
    }

    #[test]
    fn product_counts_follow_zipf_slope() {
        let cfg = SimConfig::default();
        let ds = generate(&cfg).unwrap();
        let col = ds.schema().position("brand_product").unwrap();
        let mut counts: HashMap<String, f64> = HashMap::new();
        for row in ds.rows() {
            *counts.entry(row[col].as_text().unwrap().to_string()).or_default() += 1.0;
        }
        let mut sorted: Vec<f64> = counts.values().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let xs: Vec<f64> = (1..=20).map(|r| (r as f64).ln()).collect();
        let ys: Vec<f64> = sorted[..20].iter().map(|c| c.ln()).collect();
        let slope = ols_slope(&xs, &ys);
        assert!(
            (slope + cfg.product_zipf_alpha).abs() <= 0.3,
            "rank-frequency slope {slope} not within 0.3 of -{}",
            cfg.product_zipf_alpha
        );
    }

    #[test]
    fn timestamps_after_t0_and_hours_follow_diurnal_profile() {
        let cfg = SimConfig::default();
        let ds = generate(&cfg).unwrap();
        let col = ds.schema().position("purchase_time").unwrap();
        let mut hour_hist = vec![0.0; 24];
        for row in ds.rows() {
            let ts = row[col].as_time().unwrap();
            assert!(ts >= cfg.t0, "timestamp {ts} before t0");
            hour_hist[hour_of_day(ts) as usize] += 1.0;
        }
        let rho = spearman(&hour_hist, &cfg.diurnal_profile).unwrap();
        assert!(rho > 0.5, "hour histogram does not track diurnal profile (spearman {rho})");
    }

    #[test]
    fn zero_fraction_injection_is_identity() {
        let ds = generate(&small_config(200)).unwrap();
        let out = inject_anomalies(&ds, 0.0, 7).unwrap();
        assert_eq!(ds.rows(), out.rows());
    }

    #[test]
    fn injection_count_is_exact_and_others_untouched() {
        let ds = generate(&small_config(1_000)).unwrap();
        let out = inject_anomalies(&ds, 0.05, 7).unwrap();
        let changed = ds
            .rows()
            .iter()
            .zip(out.rows())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 50);
        for (a, b) in ds.rows().iter().zip(out.rows()) {
            if a != b {
                let diffs = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
                assert_eq!(diffs, 1, "an anomaly must touch exactly one cell");
            }
        }
    }

    #[test]
    fn grid_outlier_levels_are_accepted() {
        let ds = generate(&small_config(200)).unwrap();
        for p in [0.0, 0.01, 0.05] {
            inject_anomalies(&ds, p, 1).unwrap();
        }
        assert!(inject_anomalies(&ds, 0.7, 1).is_err());
    }

    #[test]
    fn injection_is_deterministic_given_seed() {
        let ds = generate(&small_config(400)).unwrap();
        let a = inject_anomalies(&ds, 0.05, 9).unwrap();
        let b = inject_anomalies(&ds, 0.05, 9).unwrap();
        assert_eq!(a.rows(), b.rows());
    }
}
