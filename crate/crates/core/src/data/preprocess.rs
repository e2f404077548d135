//! Frame repair and exclusion, sparse-user removal, illumination screening
//! and MLP downsampling.

use serde::{Deserialize, Serialize};

use super::sample::{Sample, UserDataset};
use crate::error::{shape, Result};
use crate::numkernel::Mat;

/// Runs of at least this many invalid frames exclude a sample.
pub const MAX_INVALID_RUN: usize = 10;
/// More than this many invalid frames in total exclude a sample.
pub const MAX_INVALID_TOTAL: usize = 30;
/// Users with this many accepted samples or fewer are dropped.
pub const SPARSE_USER_MAX: usize = 4;
/// Mean gray value below which a frame counts as dark.
pub const DARK_FRAME_LEVEL: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    NoFace,
    ConsecutiveRun,
    TotalCount,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Preprocessed {
    Accepted(Sample),
    Excluded(Exclusion),
}

impl Preprocessed {
    pub fn accepted(self) -> Option<Sample> {
        match self {
            Preprocessed::Accepted(s) => Some(s),
            Preprocessed::Excluded(_) => None,
        }
    }
}

fn longest_run(flags: impl IntoIterator<Item = bool>) -> usize {
    let (mut best, mut cur) = (0, 0);
    for f in flags {
        if f {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Excludes or repairs a sample according to its face-validity channel.
///
/// Invalid frames are replaced by the most recent valid frame; frames before
/// the first valid one take the first valid frame.
pub fn preprocess_sample(sample: &Sample) -> Preprocessed {
    let invalid = sample.valid.iter().filter(|v| !**v).count();
    let Some(first_valid) = sample.valid.iter().position(|&v| v) else {
        return Preprocessed::Excluded(Exclusion::NoFace);
    };
    if longest_run(sample.valid.iter().map(|v| !v)) >= MAX_INVALID_RUN {
        return Preprocessed::Excluded(Exclusion::ConsecutiveRun);
    }
    if invalid > MAX_INVALID_TOTAL {
        return Preprocessed::Excluded(Exclusion::TotalCount);
    }
    let mut out = sample.clone();
    let mut source = first_valid;
    for t in 0..sample.valid.len() {
        if sample.valid[t] {
            source = t;
            continue;
        }
        let row = sample.features.row(source).to_vec();
        out.features.row_mut(t).copy_from_slice(&row);
        if let (Some(dst), Some(src)) = (out.glass.as_mut(), sample.glass.as_ref()) {
            dst.row_mut(t).copy_from_slice(src.row(source));
        }
    }
    out.valid.iter_mut().for_each(|v| *v = true);
    Preprocessed::Accepted(out)
}

/// True when at least `ceil(fps)` consecutive frames are darker than the
/// threshold.
pub fn detect_low_illumination(sample: &Sample) -> bool {
    let need = sample.fps.ceil().max(1.0) as usize;
    longest_run(sample.brightness.iter().map(|&b| b < DARK_FRAME_LEVEL)) >= need
}

pub fn exclude_sparse_users(users: Vec<UserDataset>) -> Vec<UserDataset> {
    users
        .into_iter()
        .filter(|u| u.len() > SPARSE_USER_MAX)
        .collect()
}

/// Per-user outcome counts of [`preprocess_users`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub accepted: usize,
    pub no_face: usize,
    pub consecutive_run: usize,
    pub total_count: usize,
    pub low_illumination: usize,
    pub users_in: usize,
    pub users_dropped_sparse: usize,
}

/// Applies the sample rules to every user, then drops sparse users.
pub fn preprocess_users(users: Vec<UserDataset>) -> (Vec<UserDataset>, PreprocessStats) {
    let mut stats = PreprocessStats {
        users_in: users.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(users.len());
    for user in users {
        let mut samples = Vec::with_capacity(user.samples.len());
        for s in &user.samples {
            if detect_low_illumination(s) {
                stats.low_illumination += 1;
            }
            match preprocess_sample(s) {
                Preprocessed::Accepted(a) => {
                    stats.accepted += 1;
                    samples.push(a);
                }
                Preprocessed::Excluded(Exclusion::NoFace) => stats.no_face += 1,
                Preprocessed::Excluded(Exclusion::ConsecutiveRun) => stats.consecutive_run += 1,
                Preprocessed::Excluded(Exclusion::TotalCount) => stats.total_count += 1,
            }
        }
        kept.push(UserDataset { samples, ..user });
    }
    let before = kept.len();
    let kept = exclude_sparse_users(kept);
    stats.users_dropped_sparse = before - kept.len();
    (kept, stats)
}

pub const MLP_SOURCE_FRAMES: usize = 124;
pub const MLP_FRAMES: usize = 12;
const MLP_BLOCK: usize = 10;

/// Averages blocks of ten frames and drops the last four: `124 x F -> 12 x F`.
pub fn downsample_for_mlp(x: &Mat) -> Result<Mat> {
    if x.rows() != MLP_SOURCE_FRAMES {
        return Err(shape(format!(
            "downsampling expects {MLP_SOURCE_FRAMES} frames, got {}",
            x.rows()
        )));
    }
    let mut out = Mat::zeros(MLP_FRAMES, x.cols());
    for k in 0..MLP_FRAMES {
        let row = out.row_mut(k);
        for t in k * MLP_BLOCK..(k + 1) * MLP_BLOCK {
            for (o, &v) in row.iter_mut().zip(x.row(t)) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|v| *v /= MLP_BLOCK as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Rng;
    use crate::path;
    use proptest::prelude::*;

    fn sample_with_invalid(t: usize, invalid: &[usize]) -> Sample {
        let mut s = Sample::new("u", 0, Mat::from_fn(t, 2, |r, c| (r * 10 + c) as f64));
        for &i in invalid {
            s.valid[i] = false;
        }
        s
    }

    #[test]
    fn ten_consecutive_excluded() {
        let s = sample_with_invalid(124, &(20..30).collect::<Vec<_>>());
        assert_eq!(preprocess_sample(&s), Preprocessed::Excluded(Exclusion::ConsecutiveRun));
        let s = sample_with_invalid(124, &(20..29).collect::<Vec<_>>());
        assert!(matches!(preprocess_sample(&s), Preprocessed::Accepted(_)));
    }

    #[test]
    fn thirty_one_scattered_excluded() {
        let idx: Vec<usize> = (0..31).map(|k| 2 + 4 * k).collect();
        let s = sample_with_invalid(124, &idx);
        assert_eq!(preprocess_sample(&s), Preprocessed::Excluded(Exclusion::TotalCount));
        let s = sample_with_invalid(124, &idx[..30]);
        assert!(matches!(preprocess_sample(&s), Preprocessed::Accepted(_)));
    }

    #[test]
    fn short_gap_repaired_from_last_valid() {
        let s = sample_with_invalid(124, &[5, 6, 7]);
        let out = preprocess_sample(&s).accepted().unwrap();
        for t in 5..=7 {
            assert_eq!(out.features.row(t), s.features.row(4));
        }
        assert_eq!(out.features.row(8), s.features.row(8));
        assert!(out.valid.iter().all(|&v| v));
    }

    #[test]
    fn leading_gap_takes_first_valid() {
        let mut s = sample_with_invalid(12, &[0, 1]);
        s.glass = Some(Mat::from_fn(12, 3, |r, _| r as f64));
        let out = preprocess_sample(&s).accepted().unwrap();
        assert_eq!(out.features.row(0), s.features.row(2));
        assert_eq!(out.glass.as_ref().unwrap().row(1), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn no_face() {
        let s = sample_with_invalid(5, &[0, 1, 2, 3, 4]);
        assert_eq!(preprocess_sample(&s), Preprocessed::Excluded(Exclusion::NoFace));
    }

    #[test]
    fn illumination_rule() {
        let mut s = Sample::new("u", 0, Mat::zeros(124, 1));
        s.fps = 30.0;
        for b in &mut s.brightness[10..40] {
            *b = 90.0;
        }
        assert!(detect_low_illumination(&s));
        s.brightness[39] = 120.0;
        assert!(!detect_low_illumination(&s));
        s.fps = 12.5;
        s.brightness = vec![150.0; 124];
        for b in &mut s.brightness[50..62] {
            *b = 99.9;
        }
        assert!(!detect_low_illumination(&s));
        s.brightness[62] = 50.0;
        assert!(detect_low_illumination(&s));
        s.brightness[62] = 100.0;
        assert!(!detect_low_illumination(&s));
    }

    fn user(id: &str, n: usize) -> UserDataset {
        UserDataset {
            user_id: id.into(),
            samples: (0..n).map(|_| Sample::new(id, 0, Mat::zeros(2, 1))).collect(),
            wears_glasses: false,
        }
    }

    #[test]
    fn sparse_users() {
        let kept = exclude_sparse_users(vec![user("a", 4), user("b", 5), user("c", 0)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].user_id, "b");
        assert!(exclude_sparse_users(vec![]).is_empty());
    }

    #[test]
    fn downsample_cases() {
        let c = downsample_for_mlp(&Mat::filled(124, 3, 2.5)).unwrap();
        assert_eq!(c.shape(), (12, 3));
        assert!(c.as_slice().iter().all(|&v| v == 2.5));
        let idx = downsample_for_mlp(&Mat::from_fn(124, 1, |r, _| r as f64)).unwrap();
        for k in 0..12 {
            assert_eq!(idx.get(k, 0), 10.0 * k as f64 + 4.5);
        }
        assert!(downsample_for_mlp(&Mat::zeros(120, 2)).is_err());
    }

    #[test]
    fn downsample_block_mean_oracle() {
        let mut rng = Rng::derive(1, &path!["ds"]);
        let x = Mat::from_fn(124, 5, |_, _| rng.normal());
        let d = downsample_for_mlp(&x).unwrap();
        for k in 0..12 {
            for j in 0..5 {
                let mean: f64 = (0..10).map(|i| x.get(10 * k + i, j)).sum::<f64>() / 10.0;
                assert!((d.get(k, j) - mean).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn accepted_output_is_fully_valid(mask in proptest::collection::vec(any::<bool>(), 1..60)) {
            let mut s = Sample::new("u", 0, Mat::from_fn(mask.len(), 2, |r, c| (r + c) as f64));
            s.valid = mask.clone();
            match preprocess_sample(&s) {
                Preprocessed::Accepted(a) => {
                    prop_assert!(a.valid.iter().all(|&v| v));
                    prop_assert!(mask.iter().any(|&v| v));
                    prop_assert!(longest_run(mask.iter().map(|v| !v)) < MAX_INVALID_RUN);
                    // every row equals some originally valid row at or before it
                    for t in 0..mask.len() {
                        let src = (0..=t).rev().find(|&u| mask[u])
                            .or_else(|| mask.iter().position(|&v| v)).unwrap();
                        prop_assert_eq!(a.features.row(t), s.features.row(src));
                    }
                }
                Preprocessed::Excluded(Exclusion::NoFace) => prop_assert!(mask.iter().all(|&v| !v)),
                Preprocessed::Excluded(Exclusion::ConsecutiveRun) => {
                    prop_assert!(longest_run(mask.iter().map(|v| !v)) >= MAX_INVALID_RUN)
                }
                Preprocessed::Excluded(Exclusion::TotalCount) => {
                    prop_assert!(mask.iter().filter(|v| !**v).count() > MAX_INVALID_TOTAL)
                }
            }
        }
    }
}
