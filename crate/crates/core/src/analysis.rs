//! Channel statistics (SNR, intensity dominance, histograms) and the
//! guidance-mode ablation harness, with CSV output as the stable
//! interchange format.

use rayon::prelude::*;

use crate::bayer::{PackedRaw, PLANE_B, PLANE_G1, PLANE_G2, PLANE_R};
use crate::error::{Error, Result};
use crate::ggle::GuidanceMode;
use crate::sensor::SensorModel;
use crate::surrogate::make_dataset;
use crate::trainer::{train, TrainConfig};

/// Population statistics of one pooled color channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStat {
    pub mean: f64,
    pub std: f64,
    /// `20·log10(mean/std)`; `None` marks the undefined case `std = 0`.
    pub snr_db: Option<f64>,
}

/// Per-color statistics; G pools both green planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub r: ChannelStat,
    pub g: ChannelStat,
    pub b: ChannelStat,
}

fn stat_of(values: impl Iterator<Item = f32> + Clone) -> ChannelStat {
    let mut n = 0u64;
    let mut sum = 0.0f64;
    for v in values.clone() {
        n += 1;
        sum += v as f64;
    }
    let mean = sum / n as f64;
    let mut sq = 0.0f64;
    for v in values {
        let d = v as f64 - mean;
        sq += d * d;
    }
    let std = (sq / n as f64).sqrt();
    let snr_db = (std > 0.0 && mean > 0.0).then(|| 20.0 * (mean / std).log10());
    ChannelStat { mean, std, snr_db }
}

/// SNR of one packed frame.
pub fn channel_snr(packed: &PackedRaw) -> ChannelStats {
    channel_snr_pooled(std::slice::from_ref(packed))
}

/// SNR over the pooled pixel population of several frames.
pub fn channel_snr_pooled(frames: &[PackedRaw]) -> ChannelStats {
    let r = frames.iter().flat_map(|p| p.plane(PLANE_R).iter().copied());
    let g = frames.iter().flat_map(|p| {
        p.plane(PLANE_G1).iter().copied().chain(p.plane(PLANE_G2).iter().copied())
    });
    let b = frames.iter().flat_map(|p| p.plane(PLANE_B).iter().copied());
    ChannelStats { r: stat_of(r), g: stat_of(g), b: stat_of(b) }
}

pub fn snr_csv(stats: &ChannelStats) -> String {
    let mut out = String::from("channel,mean,std,snr_db\n");
    for (name, s) in [("R", &stats.r), ("G", &stats.g), ("B", &stats.b)] {
        let snr = s.snr_db.map_or("undefined".to_string(), |v| v.to_string());
        out.push_str(&format!("{name},{},{},{snr}\n", s.mean, s.std));
    }
    out
}

// ── Dominance ──────────────────────────────────────────────────────

/// Per-pixel strict-argmax counts over `(R, mean(G1,G2), B)`. Ties (no
/// strict maximum) are counted separately, so the four counts always
/// sum to the pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dominance {
    pub r: u64,
    pub g: u64,
    pub b: u64,
    pub ties: u64,
}

impl Dominance {
    pub fn total(&self) -> u64 {
        self.r + self.g + self.b + self.ties
    }

    /// `(r, g, b, ties)` fractions of the pixel count.
    pub fn fractions(&self) -> [f64; 4] {
        let t = self.total() as f64;
        [self.r as f64 / t, self.g as f64 / t, self.b as f64 / t, self.ties as f64 / t]
    }
}

pub fn channel_dominance(packed: &PackedRaw) -> Dominance {
    let r = packed.plane(PLANE_R);
    let g1 = packed.plane(PLANE_G1);
    let g2 = packed.plane(PLANE_G2);
    let b = packed.plane(PLANE_B);
    let mut counts = Dominance { r: 0, g: 0, b: 0, ties: 0 };
    for i in 0..r.len() {
        let rv = r[i];
        let gv = 0.5 * (g1[i] + g2[i]);
        let bv = b[i];
        let max = rv.max(gv).max(bv);
        let winners = (rv == max) as u8 + (gv == max) as u8 + (bv == max) as u8;
        if winners > 1 {
            counts.ties += 1;
        } else if rv == max {
            counts.r += 1;
        } else if gv == max {
            counts.g += 1;
        } else {
            counts.b += 1;
        }
    }
    counts
}

// ── Histograms ─────────────────────────────────────────────────────

/// Uniform-bin histogram over a declared value range. Values at the top
/// edge land in the last bin; out-of-range values clamp into the end
/// bins so counts always sum to the input length.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub channel: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins + 1` strictly increasing edges.
    pub fn edges(&self) -> Vec<f64> {
        let bins = self.counts.len();
        (0..=bins)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / bins as f64)
            .collect()
    }
}

pub fn histogram(channel: &str, values: &[f32], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if hi <= lo || hi.is_nan() || lo.is_nan() {
        return Err(Error::Config(format!("histogram range [{lo}, {hi}] is empty")));
    }
    let mut counts = vec![0u64; bins];
    let scale = bins as f64 / (hi - lo);
    for &v in values {
        let idx = (((v as f64 - lo) * scale).floor() as i64).clamp(0, bins as i64 - 1);
        counts[idx as usize] += 1;
    }
    Ok(Histogram { channel: channel.to_string(), lo, hi, counts })
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("channel,bin_start,bin_end,count\n");
    let edges = h.edges();
    for (i, &c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{},{},{},{c}\n", h.channel, edges[i], edges[i + 1]));
    }
    out
}

// ── Ablation harness ───────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: GuidanceMode,
    pub seed: u64,
    /// `None` marks a run that diverged (recorded, never dropped).
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,seed,final_loss\n");
        for row in &self.rows {
            let loss = row.final_loss.map_or("divergent".to_string(), |v| v.to_string());
            out.push_str(&format!("{},{},{loss}\n", row.mode, row.seed));
        }
        out
    }

    /// Per-mode `(mean, population std)` of final losses over the
    /// completed (non-divergent) runs, in first-seen mode order.
    pub fn aggregate(&self) -> Vec<(GuidanceMode, f64, f64)> {
        let mut order: Vec<GuidanceMode> = Vec::new();
        for row in &self.rows {
            if !order.contains(&row.mode) {
                order.push(row.mode);
            }
        }
        order
            .into_iter()
            .map(|mode| {
                let losses: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.mode == mode)
                    .filter_map(|r| r.final_loss)
                    .collect();
                if losses.is_empty() {
                    return (mode, f64::NAN, f64::NAN);
                }
                let n = losses.len() as f64;
                let mean = losses.iter().sum::<f64>() / n;
                let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
                (mode, mean, var.sqrt())
            })
            .collect()
    }
}

/// Train one run per `(mode, seed)` with everything else fixed. Runs
/// are independent, so `threads > 1` executes them on a rayon pool;
/// results are collected in input order either way.
pub fn run_ablation(
    base: &TrainConfig,
    modes: &[GuidanceMode],
    seeds: &[u64],
    samples: usize,
    model: &SensorModel,
    threads: usize,
) -> Result<AblationTable> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one mode and one seed".into()));
    }
    let jobs: Vec<(GuidanceMode, u64)> = modes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let run = |&(mode, seed): &(GuidanceMode, u64)| -> Result<AblationRow> {
        let mut cfg = base.clone();
        cfg.guidance_mode = mode;
        cfg.seed = seed;
        let dataset = make_dataset(samples, model, seed)?;
        match train(&cfg, &dataset) {
            Ok((_, report)) => Ok(AblationRow { mode, seed, final_loss: Some(report.final_loss) }),
            Err(Error::Diverged { .. }) | Err(Error::NonFinite(_)) => {
                Ok(AblationRow { mode, seed, final_loss: None })
            }
            Err(e) => Err(e),
        }
    };
    let rows: Vec<AblationRow> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packed_from_planes(r: &[f32], g1: &[f32], g2: &[f32], b: &[f32], h: usize, w: usize) -> PackedRaw {
        let mut data = Vec::new();
        data.extend_from_slice(r);
        data.extend_from_slice(g1);
        data.extend_from_slice(g2);
        data.extend_from_slice(b);
        PackedRaw::new(h, w, data).unwrap()
    }

    #[test]
    fn snr_matches_definition() {
        // two-point population μ ± σ with μ = 10σ gives exactly 20 dB
        let mu = 0.5f32;
        let sigma = 0.05f32;
        let r: Vec<f32> = vec![mu - sigma, mu + sigma];
        let stats = channel_snr(&packed_from_planes(&r, &r, &r, &r, 1, 2));
        assert!((stats.r.snr_db.unwrap() - 20.0).abs() < 1e-4);
    }

    #[test]
    fn constant_channel_has_undefined_snr() {
        let c = vec![0.25f32; 4];
        let stats = channel_snr(&packed_from_planes(&c, &c, &c, &c, 2, 2));
        assert_eq!(stats.g.snr_db, None);
        let csv = snr_csv(&stats);
        assert!(csv.contains("G,0.25,0,undefined"));
    }

    #[test]
    fn snr_is_invariant_under_frame_duplication() {
        let r: Vec<f32> = vec![0.1, 0.5, 0.9, 0.3];
        let g: Vec<f32> = vec![0.2, 0.6, 0.8, 0.4];
        let p = packed_from_planes(&r, &g, &g, &r, 2, 2);
        let single = channel_snr(&p);
        let doubled = channel_snr_pooled(&[p.clone(), p]);
        assert_eq!(single, doubled);
    }

    #[test]
    fn dominance_counts_strict_maxima_and_ties() {
        let ones = vec![1.0f32];
        let zeros = vec![0.0f32];
        let d = channel_dominance(&packed_from_planes(&zeros, &ones, &ones, &zeros, 1, 1));
        assert_eq!((d.r, d.g, d.b, d.ties), (0, 1, 0, 0));
        let d = channel_dominance(&packed_from_planes(&ones, &ones, &ones, &ones, 1, 1));
        assert_eq!((d.r, d.g, d.b, d.ties), (0, 0, 0, 1));
        assert_eq!(d.fractions(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dominance_matches_independent_reimplementation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let n = 64;
        let plane = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| (rng.random_range(0..=4) as f32) * 0.25).collect()
        };
        let (r, g1, g2, b) = (plane(&mut rng), plane(&mut rng), plane(&mut rng), plane(&mut rng));
        let packed = packed_from_planes(&r, &g1, &g2, &b, 8, 8);
        let d = channel_dominance(&packed);
        // oracle: sort the candidates per pixel and inspect the top two
        let mut expected = [0u64; 4];
        for i in 0..n {
            let mut cands = [(r[i], 0usize), ((g1[i] + g2[i]) / 2.0, 1), (b[i], 2)];
            cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
            if cands[0].0 == cands[1].0 {
                expected[3] += 1;
            } else {
                expected[cands[0].1] += 1;
            }
        }
        assert_eq!([d.r, d.g, d.b, d.ties], expected);
    }

    #[test]
    fn dominance_fractions_sum_to_one_exactly() {
        let r = vec![0.9f32, 0.1, 0.5, 0.5];
        let g1 = vec![0.1f32, 0.8, 0.5, 0.2];
        let g2 = vec![0.1f32, 0.9, 0.5, 0.2];
        let b = vec![0.2f32, 0.3, 0.5, 0.9];
        let d = channel_dominance(&packed_from_planes(&r, &g1, &g2, &b, 2, 2));
        assert_eq!(d.total(), 4);
        assert_eq!(d.r + d.g + d.b + d.ties, 4);
    }

    #[test]
    fn histogram_splits_unit_range() {
        let h = histogram("G1", &[0.0, 0.0, 1.0, 1.0], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.counts, vec![2, 2]);
        let edges = h.edges();
        assert_eq!(edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_conserves_counts() {
        let values: Vec<f32> = (0..97).map(|i| (i as f32 * 7.3) % 255.0).collect();
        let h = histogram("out", &values, 16, 0.0, 255.0).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 97);
    }

    #[test]
    fn histogram_of_constant_input_hits_single_bin() {
        let h = histogram("R", &[0.42; 10], 8, 0.0, 1.0).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<u64>(), 10);
    }

    #[test]
    fn histogram_is_permutation_invariant() {
        let mut values: Vec<f32> = (0..50).map(|i| i as f32 / 49.0).collect();
        let a = histogram("x", &values, 7, 0.0, 1.0).unwrap();
        values.reverse();
        values.swap(3, 17);
        let b = histogram("x", &values, 7, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_rejects_bad_configs() {
        assert!(histogram("x", &[0.5], 0, 0.0, 1.0).is_err());
        assert!(histogram("x", &[0.5], 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn ablation_csv_is_deterministic() {
        let base = TrainConfig { epochs: 1, warmup_epochs: 0, batch_size: 4, ..Default::default() };
        let model = SensorModel::default();
        let a = run_ablation(&base, &[GuidanceMode::Gg], &[1], 8, &model, 1).unwrap();
        let b = run_ablation(&base, &[GuidanceMode::Gg], &[1], 8, &model, 1).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 1);
        assert!(a.to_csv().starts_with("mode,seed,final_loss\n"));
    }
}
