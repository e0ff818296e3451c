//! Local maxima, topographic prominence and the peak selection used by the
//! regression loss.

use serde::{Deserialize, Serialize};

use super::RadiusProfile;

/// Indices of the local maxima of `x`. A flat top counts once, at the middle
/// of the plateau (lower middle for even plateaus). Endpoints are never
/// maxima.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of each peak: its height above the higher of the
/// two lowest points reached before meeting strictly higher ground (or the
/// signal boundary) on either side.
pub fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = x[p];
            let mut left_min = h;
            for &v in x[..=p].iter().rev() {
                if v > h {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = h;
            for &v in &x[p..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

/// Peak selection knobs for the regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// Minimum peak separation in mean vessel diameters.
    pub min_separation_diameters: f64,
    /// Fraction of the largest prominence a peak must reach to be kept.
    pub relative_prominence: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_separation_diameters: 2.5,
            relative_prominence: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    /// Set when the profile has no usable peak and the endpoints stand in.
    pub fallback: bool,
}

/// Radius peaks used as healthy support points.
///
/// Local maxima closer than the minimum separation are thinned greedily,
/// highest first (lower index on equal heights); the survivors must then
/// reach the relative prominence threshold.
pub fn detect_peaks(p: &RadiusProfile, opts: &PeakOptions) -> PeakSet {
    let r = p.radius();
    let s = p.abscissa();
    let candidates = local_maxima(r);
    let min_dist = opts.min_separation_diameters * 2.0 * p.mean_radius();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| r[candidates[b]].total_cmp(&r[candidates[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        for j in 0..candidates.len() {
            if j != i && keep[j] && (s[candidates[j]] - s[candidates[i]]).abs() < min_dist {
                keep[j] = false;
            }
        }
    }
    let spaced: Vec<usize> = candidates
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(c, _)| *c)
        .collect();

    let prom = prominences(r, &spaced);
    let max_prom = prom.iter().copied().fold(0.0, f64::max);
    let indices: Vec<usize> = spaced
        .iter()
        .zip(&prom)
        .filter(|(_, &pr)| max_prom > 0.0 && pr >= opts.relative_prominence * max_prom)
        .map(|(i, _)| *i)
        .collect();

    if indices.is_empty() {
        PeakSet {
            indices: vec![0, r.len() - 1],
            fallback: true,
        }
    } else {
        PeakSet {
            indices,
            fallback: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(r: Vec<f64>, step: f64) -> RadiusProfile {
        let s = (0..r.len()).map(|i| i as f64 * step).collect();
        RadiusProfile::new(s, r).unwrap()
    }

    #[test]
    fn plateau_counts_once() {
        assert_eq!(local_maxima(&[0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0]), vec![3]);
        assert_eq!(local_maxima(&[0.0, 2.0, 2.0, 0.0]), vec![1]);
        assert!(local_maxima(&[1.0, 2.0, 3.0, 4.0]).is_empty());
        assert!(local_maxima(&[5.0, 3.0, 1.0, 3.0, 5.0]).is_empty());
    }

    #[test]
    fn prominence_of_shouldered_peak() {
        let x = [0.0, 5.0, 4.0, 4.5, 0.0];
        assert_eq!(prominences(&x, &[1, 3]), vec![5.0, 0.5]);
    }

    #[test]
    fn monotone_profile_falls_back_to_endpoints() {
        let p = profile((0..20).map(|i| 3.0 - i as f64 * 0.05).collect(), 0.5);
        let peaks = detect_peaks(&p, &PeakOptions::default());
        assert!(peaks.fallback);
        assert_eq!(peaks.indices, vec![0, 19]);
    }

    #[test]
    fn close_peaks_keep_the_higher() {
        // 3 mm diameter vessel: minimum separation 7.5 mm; peaks 1 mm apart
        let mut r = vec![1.4; 41];
        r[20] = 1.55;
        r[22] = 1.6;
        let peaks = detect_peaks(&profile(r, 0.5), &PeakOptions::default());
        assert_eq!(peaks.indices, vec![22]);
        assert!(!peaks.fallback);
    }

    /// Exhaustive oracle: peaks by brute force scan, greedy separation by
    /// repeatedly picking the highest unblocked peak, prominence by scanning
    /// every higher point on each side.
    fn oracle(r: &[f64], s: &[f64], min_dist: f64, rel: f64) -> Vec<usize> {
        let n = r.len();
        let mut cands = Vec::new();
        for i in 1..n - 1 {
            // extent of the plateau containing i
            let mut lo = i;
            while lo > 0 && r[lo - 1] == r[i] {
                lo -= 1;
            }
            let mut hi = i;
            while hi < n - 1 && r[hi + 1] == r[i] {
                hi += 1;
            }
            if lo == 0 || hi == n - 1 {
                continue;
            }
            if r[lo - 1] < r[i] && r[hi + 1] < r[i] && i == (lo + hi) / 2 {
                cands.push(i);
            }
        }
        let mut chosen: Vec<usize> = Vec::new();
        let mut blocked = vec![false; cands.len()];
        loop {
            let mut best: Option<usize> = None;
            for k in 0..cands.len() {
                if blocked[k] {
                    continue;
                }
                if best.map_or(true, |b| r[cands[k]] > r[cands[b]]) {
                    best = Some(k);
                }
            }
            let Some(b) = best else { break };
            blocked[b] = true;
            chosen.push(cands[b]);
            for k in 0..cands.len() {
                if (s[cands[k]] - s[cands[b]]).abs() < min_dist {
                    blocked[k] = true;
                }
            }
        }
        chosen.sort_unstable();
        let prom: Vec<f64> = chosen
            .iter()
            .map(|&p| {
                let side_min = |range: Vec<usize>| {
                    // saddle towards the nearest strictly higher point, else the boundary
                    let mut lowest = r[p];
                    for j in range {
                        if r[j] > r[p] {
                            break;
                        }
                        lowest = lowest.min(r[j]);
                    }
                    lowest
                };
                let left = side_min((0..p).rev().collect());
                let right = side_min((p + 1..n).collect());
                r[p] - left.max(right)
            })
            .collect();
        let max_prom = prom.iter().copied().fold(0.0, f64::max);
        let kept: Vec<usize> = chosen
            .iter()
            .zip(&prom)
            .filter(|(_, &pr)| max_prom > 0.0 && pr >= rel * max_prom)
            .map(|(i, _)| *i)
            .collect();
        if kept.is_empty() {
            vec![0, n - 1]
        } else {
            kept
        }
    }

    #[test]
    fn random_profiles_match_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(5..120);
            // quantised radii so plateaus and ties occur
            let r: Vec<f64> = (0..n)
                .map(|_| 1.0 + rng.random_range(0..12) as f64 * 0.1)
                .collect();
            let p = profile(r.clone(), 0.5);
            let got = detect_peaks(&p, &PeakOptions::default());
            let want = oracle(&r, p.abscissa(), 5.0 * p.mean_radius(), 0.25);
            assert_eq!(got.indices, want, "radius {r:?}");
        }
    }
}
