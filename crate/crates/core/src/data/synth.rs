//! Synthetic non-iid corpus shaped after a real remote-learning dataset:
//! heavy-tailed per-user sample counts, per-user label rates drawn around a
//! 30% base rate, a minority of single-class users, and sequences whose class
//! shows up as a drift over time on top of a per-user offset.

use rand_distr::{Beta, LogNormal};
use serde::{Deserialize, Serialize};

use super::sample::{Sample, UserDataset};
use crate::error::{config, Result};
use crate::numkernel::{Mat, Rng};
use crate::path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub mean_samples: f64,
    /// Log-normal sigma of the per-user sample count.
    pub count_sigma: f64,
    pub max_samples: usize,
    /// Overall fraction of positive samples.
    pub pos_rate: f64,
    /// Beta concentration `a + b` of the per-user positive rate.
    pub pos_concentration: f64,
    pub frac_all_positive: f64,
    pub frac_all_negative: f64,
    pub frac_glasses: f64,
    pub seq_len: usize,
    pub feat_dim: usize,
    /// 0 disables the glass channel.
    pub glass_dim: usize,
    pub fps: f64,
    /// Class-dependent drift over the clip, in noise units.
    pub drift: f64,
    pub noise: f64,
    /// AR(1) coefficient of the per-frame noise.
    pub noise_ar: f64,
    /// Scale of the per-user feature offset.
    pub user_offset: f64,
    /// Scale of the per-user perturbation of the drift direction.
    pub user_direction_jitter: f64,
    /// Fraction of samples whose features follow the opposite class.
    pub label_noise: f64,
    pub invalid_frame_rate: f64,
    /// Chance that a sample carries a face-loss burst of 10+ frames.
    pub burst_rate: f64,
    pub dark_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 130,
            mean_samples: 25.4,
            count_sigma: 1.0,
            max_samples: 400,
            pos_rate: 0.30,
            pos_concentration: 2.0,
            frac_all_positive: 8.0 / 130.0,
            frac_all_negative: 15.0 / 130.0,
            frac_glasses: 0.2,
            seq_len: 12,
            feat_dim: 16,
            glass_dim: 8,
            fps: 1.2,
            drift: 0.6,
            noise: 1.0,
            noise_ar: 0.5,
            user_offset: 0.7,
            user_direction_jitter: 0.5,
            label_noise: 0.1,
            invalid_frame_rate: 0.02,
            burst_rate: 0.01,
            dark_rate: 0.03,
        }
    }
}

/// Per-user draw made before any sample is generated.
#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub n_samples: usize,
    pub pos_rate: f64,
    pub forced: Option<u8>,
    pub wears_glasses: bool,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("pos_rate", self.pos_rate),
            ("frac_all_positive", self.frac_all_positive),
            ("frac_all_negative", self.frac_all_negative),
            ("frac_glasses", self.frac_glasses),
            ("invalid_frame_rate", self.invalid_frame_rate),
            ("label_noise", self.label_noise),
            ("burst_rate", self.burst_rate),
            ("dark_rate", self.dark_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(config(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.frac_all_positive + self.frac_all_negative > 1.0 + 1e-12 {
            return Err(config("single-class user fractions sum above 1"));
        }
        if self.n_users == 0 || self.seq_len == 0 || self.feat_dim == 0 || self.max_samples == 0 {
            return Err(config("counts must be at least 1"));
        }
        if !(self.mean_samples >= 1.0) || !(self.fps > 0.0) || !(self.pos_concentration > 0.0) {
            return Err(config("mean_samples >= 1, fps > 0 and pos_concentration > 0 required"));
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return Err(config("noise_ar must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Number of users forced to all-positive and all-negative labels.
    pub fn forced_counts(&self) -> (usize, usize) {
        let pos = (self.frac_all_positive * self.n_users as f64).round() as usize;
        let neg = (self.frac_all_negative * self.n_users as f64).round() as usize;
        let pos = pos.min(self.n_users);
        (pos, neg.min(self.n_users - pos))
    }

    /// Beta mean for the unforced users so that the expected overall rate
    /// matches `pos_rate`.
    pub fn free_user_mean(&self) -> f64 {
        let (p, n) = self.forced_counts();
        let free = self.n_users - p - n;
        if free == 0 {
            return self.pos_rate;
        }
        let fp = p as f64 / self.n_users as f64;
        let ff = free as f64 / self.n_users as f64;
        ((self.pos_rate - fp) / ff).clamp(0.01, 0.99)
    }

    pub fn beta_params(&self) -> (f64, f64) {
        let m = self.free_user_mean();
        (m * self.pos_concentration, (1.0 - m) * self.pos_concentration)
    }

    pub fn beta_variance(&self) -> f64 {
        let m = self.free_user_mean();
        m * (1.0 - m) / (self.pos_concentration + 1.0)
    }
}

pub fn draw_profiles(spec: &SynthSpec, seed: u64) -> Result<Vec<UserProfile>> {
    spec.validate()?;
    let mut rng = Rng::derive(seed, &path!["synth", "profiles"]);
    let (n_pos, n_neg) = spec.forced_counts();
    let mut forced: Vec<Option<u8>> = (0..spec.n_users)
        .map(|i| {
            if i < n_pos {
                Some(1)
            } else if i < n_pos + n_neg {
                Some(0)
            } else {
                None
            }
        })
        .collect();
    rng.shuffle(&mut forced);
    let mu = spec.mean_samples.ln() - spec.count_sigma * spec.count_sigma / 2.0;
    let counts = LogNormal::new(mu, spec.count_sigma.max(1e-12))
        .map_err(|e| config(format!("count law: {e}")))?;
    let (a, b) = spec.beta_params();
    let rates = Beta::new(a, b).map_err(|e| config(format!("rate law: {e}")))?;
    Ok(forced
        .into_iter()
        .map(|forced| {
            let n = if spec.count_sigma == 0.0 {
                spec.mean_samples.round()
            } else {
                rng.sample(&counts).round()
            };
            let n_samples = (n as usize).clamp(1, spec.max_samples);
            let drawn: f64 = rng.sample(&rates);
            let pos_rate = match forced {
                Some(1) => 1.0,
                Some(_) => 0.0,
                None => drawn,
            };
            let wears_glasses = rng.bernoulli(spec.frac_glasses);
            UserProfile {
                n_samples,
                pos_rate,
                forced,
                wears_glasses,
            }
        })
        .collect())
}

struct World {
    direction: Vec<f64>,
    glass_signature: Vec<f64>,
}

fn generate_sample(
    spec: &SynthSpec,
    world: &World,
    user_id: &str,
    offset: &[f64],
    direction: &[f64],
    brightness_base: f64,
    wears_glasses: bool,
    label: u8,
    rng: &mut Rng,
) -> Sample {
    let (t_len, f) = (spec.seq_len, spec.feat_dim);
    let flipped = rng.bernoulli(spec.label_noise);
    let sign = if (label == 1) != flipped { 1.0 } else { -1.0 };
    let innov = (1.0 - spec.noise_ar * spec.noise_ar).sqrt();
    let gaze_dims = f.min(4);
    let mut noise = vec![0.0; f];
    let mut features = Mat::zeros(t_len, f);
    for t in 0..t_len {
        let phase = if t_len > 1 {
            t as f64 / (t_len - 1) as f64 - 0.5
        } else {
            0.0
        };
        for j in 0..f {
            let mut scale = spec.noise;
            if wears_glasses && j >= f - gaze_dims {
                scale *= 2.0;
            }
            noise[j] = spec.noise_ar * noise[j] + innov * scale * rng.normal();
            let v = offset[j] + sign * spec.drift * phase * direction[j] * (f as f64).sqrt() + noise[j];
            features.set(t, j, v);
        }
    }
    let glass = (spec.glass_dim > 0).then(|| {
        Mat::from_fn(t_len, spec.glass_dim, |_, j| {
            let base = if wears_glasses {
                world.glass_signature[j]
            } else {
                0.0
            };
            base + 0.1 * rng.normal()
        })
    });
    let mut valid: Vec<bool> = (0..t_len)
        .map(|_| !rng.bernoulli(spec.invalid_frame_rate))
        .collect();
    if rng.bernoulli(spec.burst_rate) {
        let len = (10 + rng.below(5)).min(t_len);
        let start = rng.below(t_len - len + 1);
        valid[start..start + len].iter_mut().for_each(|v| *v = false);
    }
    let dark = rng.bernoulli(spec.dark_rate);
    let brightness = (0..t_len)
        .map(|_| {
            let b = if dark {
                rng.uniform_range(40.0, 95.0)
            } else {
                brightness_base + rng.uniform_range(-5.0, 5.0)
            };
            b.clamp(0.0, 255.0)
        })
        .collect();
    Sample {
        user_id: user_id.to_owned(),
        label,
        features,
        glass,
        valid,
        brightness,
        fps: spec.fps,
    }
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<UserDataset>> {
    let profiles = draw_profiles(spec, seed)?;
    let mut wrng = Rng::derive(seed, &path!["synth", "world"]);
    let world = World {
        direction: wrng.unit_vector(spec.feat_dim),
        glass_signature: (0..spec.glass_dim).map(|_| wrng.normal()).collect(),
    };
    let users = profiles
        .iter()
        .enumerate()
        .map(|(u, prof)| {
            let user_id = format!("u{u:03}");
            let mut rng = Rng::derive(seed, &path!["synth", "user", u]);
            let offset: Vec<f64> = (0..spec.feat_dim)
                .map(|_| spec.user_offset * rng.normal())
                .collect();
            let jitter = rng.unit_vector(spec.feat_dim);
            let mut direction: Vec<f64> = world
                .direction
                .iter()
                .zip(&jitter)
                .map(|(d, j)| d + spec.user_direction_jitter * j)
                .collect();
            let n = crate::numkernel::norm(&direction).max(1e-12);
            direction.iter_mut().for_each(|d| *d /= n);
            let brightness_base = rng.uniform_range(110.0, 200.0);
            let samples = (0..prof.n_samples)
                .map(|k| {
                    let mut srng = rng.child(&path!["sample", k]);
                    let label = u8::from(srng.bernoulli(prof.pos_rate));
                    generate_sample(
                        spec,
                        &world,
                        &user_id,
                        &offset,
                        &direction,
                        brightness_base,
                        prof.wears_glasses,
                        label,
                        &mut srng,
                    )
                })
                .collect();
            UserDataset {
                user_id,
                samples,
                wears_glasses: prof.wears_glasses,
            }
        })
        .collect();
    Ok(users)
}
