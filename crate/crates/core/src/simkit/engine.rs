//! Seeded discrete-event generation of herald and screen time tags.
//!
//! Work is split into fixed chunks (one second of heralds, or a fixed number
//! of heralds) and every chunk draws from its own ChaCha stream derived from
//! the run seed, so the output does not depend on how rayon schedules the
//! chunks.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use super::spec::{validate_detectors, ChannelOffsets, DetectorSpec, PhotonStatistics, SourceSpec};
use super::tags::{StreamHeader, TagStream, TimeTag};
use super::{SimError, FIRST_SCREEN_CHANNEL, HERALD_CHANNEL};
use crate::collapse::{detection_delay, CollapseModel};
use crate::optics::IntensityProfile;
use crate::units::{FWHM_PER_SIGMA, PS_PER_S};

const CHUNK_PS: u64 = 1_000_000_000_000;
const HERALDS_PER_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Heralds = 1,
    Photons = 2,
    Darks = 3,
    Afterpulses = 4,
}

/// Independent random stream for one (purpose, index) pair of a run.
fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// SplitMix64 finalizer, used to derive per-phase seeds from a run seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn duration_ps(duration_s: f64) -> Result<u64, SimError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SimError::InvalidDuration(duration_s));
    }
    Ok((duration_s * PS_PER_S).round() as u64)
}

/// Homogeneous Poisson arrivals at `rate_hz` over `[0, duration)`, in picoseconds.
fn poisson_times(rate_hz: f64, total_ps: u64, seed: u64, purpose: Purpose, lane: u64) -> Vec<u64> {
    if rate_hz <= 0.0 {
        return Vec::new();
    }
    let mean_gap_ps = PS_PER_S / rate_hz;
    let chunks = total_ps.div_ceil(CHUNK_PS);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            // lane in the high bits keeps per-channel streams apart
            let mut rng = substream(seed, purpose, (lane << 32) | k);
            let exp = Exp::new(1.0).expect("unit rate");
            let start = k * CHUNK_PS;
            let len = (total_ps - start).min(CHUNK_PS) as f64;
            let mut out = Vec::with_capacity((len / mean_gap_ps * 1.1) as usize + 16);
            let mut t = 0.0f64;
            loop {
                t += exp.sample(&mut rng) * mean_gap_ps;
                if t >= len {
                    break;
                }
                out.push(start + t as u64);
            }
            out
        })
        .flatten()
        .collect()
}

/// Herald (D1) events: a Poisson process at the source's herald rate. Channel
/// latencies are not applied here.
pub fn generate_heralds(source: &SourceSpec, duration_s: f64, seed: u64) -> Result<TagStream, SimError> {
    source.validate()?;
    let total = duration_ps(duration_s)?;
    let tags = poisson_times(source.herald_rate_hz, total, seed, Purpose::Heralds, 0)
        .into_iter()
        .map(|t| TimeTag::new(HERALD_CHANNEL, t))
        .collect();
    Ok(TagStream::new(
        StreamHeader {
            seed,
            duration_s,
            config_hash: String::new(),
            channels: vec![HERALD_CHANNEL],
            phase: None,
        },
        tags,
    ))
}

/// Counters collected while generating a stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChannelStats {
    pub signal: u64,
    pub dark: u64,
    pub afterpulse: u64,
    pub dead_time_losses: u64,
    pub recorded: u64,
}

/// Per-run bookkeeping, including the per-herald screen-detection count used
/// to check single-photon exclusivity.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimDiagnostics {
    pub heralds: u64,
    pub photons_at_screen: u64,
    /// Histogram of signal registrations per herald, before dark counts,
    /// afterpulses and dead time: index `k` counts heralds with `k` registrations.
    pub registrations_per_herald: Vec<u64>,
    pub dropped_negative_time: u64,
    pub delay_s: f64,
    pub channels: BTreeMap<u8, ChannelStats>,
}

impl SimDiagnostics {
    pub fn max_registrations_per_herald(&self) -> usize {
        self.registrations_per_herald
            .iter()
            .rposition(|&n| n > 0)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub stream: TagStream,
    pub diagnostics: SimDiagnostics,
}

/// Everything the photon stage needs besides the herald stream.
#[derive(Debug, Clone, Copy)]
pub struct PropagationSetup<'a> {
    pub source: &'a SourceSpec,
    pub profile: &'a IntensityProfile,
    pub detectors: &'a [DetectorSpec],
    pub model: CollapseModel,
    pub offsets: &'a ChannelOffsets,
}

struct ChunkResult {
    /// (detector index, time in ps) of every signal registration.
    hits: Vec<(usize, u64)>,
    photons: u64,
    per_herald: Vec<u64>,
    dropped: u64,
}

/// Sends each heralded photon to the screen, registers it at the detector
/// covering its landing point, and adds dark counts, afterpulses and dead time.
///
/// The output contains the passthrough herald channel (with its latency
/// applied) and one channel per screen detector, numbered from
/// [`FIRST_SCREEN_CHANNEL`] in list order.
pub fn propagate_and_detect(
    heralds: &TagStream,
    setup: &PropagationSetup<'_>,
    seed: u64,
) -> Result<SimOutput, SimError> {
    setup.source.validate()?;
    validate_detectors(setup.detectors)?;
    setup.offsets.validate()?;
    let total_ps = duration_ps(heralds.header.duration_s)?;
    let delay_s = detection_delay(setup.model, setup.profile)?;
    let herald_times = heralds.channel(HERALD_CHANNEL);

    let detectors = setup.detectors;
    let channel_of = |i: usize| FIRST_SCREEN_CHANNEL + i as u8;
    let fixed_ps: Vec<f64> = (0..detectors.len())
        .map(|i| (setup.offsets.get(channel_of(i)) + delay_s) * PS_PER_S)
        .collect();
    let jitter: Vec<Normal<f64>> = detectors
        .iter()
        .map(|d| Normal::new(0.0, d.resolution_fwhm_s * PS_PER_S / FWHM_PER_SIGMA))
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::InvalidDetector(e.to_string()))?;
    let photon_number = match setup.source.statistics {
        PhotonStatistics::Fock1 => None,
        PhotonStatistics::Coherent { mean_photon_number } => Some(
            Poisson::new(mean_photon_number).map_err(|e| SimError::InvalidSource(e.to_string()))?,
        ),
    };
    let eta = setup.source.path_efficiency;
    let profile = setup.profile;

    let chunks: Vec<ChunkResult> = herald_times
        .par_chunks(HERALDS_PER_CHUNK)
        .enumerate()
        .map(|(k, chunk)| {
            let mut rng = substream(seed, Purpose::Photons, k as u64);
            let mut res = ChunkResult {
                hits: Vec::new(),
                photons: 0,
                per_herald: vec![0; 3],
                dropped: 0,
            };
            for &t in chunk {
                let n = match &photon_number {
                    None => 1,
                    Some(p) => p.sample(&mut rng) as u64,
                };
                let mut registered = 0usize;
                for _ in 0..n {
                    if rng.random::<f64>() >= eta {
                        continue;
                    }
                    res.photons += 1;
                    let x = profile.sample_position(rng.random::<f64>());
                    let Some(i) = detectors.iter().position(|d| d.covers(x)) else {
                        continue;
                    };
                    if rng.random::<f64>() >= detectors[i].efficiency {
                        continue;
                    }
                    registered += 1;
                    let at = t as f64 + fixed_ps[i] + jitter[i].sample(&mut rng);
                    if at < 0.0 {
                        res.dropped += 1;
                        continue;
                    }
                    res.hits.push((i, at.round() as u64));
                }
                if registered >= res.per_herald.len() {
                    res.per_herald.resize(registered + 1, 0);
                }
                res.per_herald[registered] += 1;
            }
            res
        })
        .collect();

    let mut diagnostics = SimDiagnostics {
        heralds: herald_times.len() as u64,
        delay_s,
        ..SimDiagnostics::default()
    };
    let mut primary: Vec<Vec<u64>> = vec![Vec::new(); detectors.len()];
    let mut signal_counts = vec![0u64; detectors.len()];
    for c in chunks {
        diagnostics.photons_at_screen += c.photons;
        diagnostics.dropped_negative_time += c.dropped;
        if c.per_herald.len() > diagnostics.registrations_per_herald.len() {
            diagnostics.registrations_per_herald.resize(c.per_herald.len(), 0);
        }
        for (slot, n) in diagnostics.registrations_per_herald.iter_mut().zip(&c.per_herald) {
            *slot += n;
        }
        for (i, t) in c.hits {
            primary[i].push(t);
            signal_counts[i] += 1;
        }
    }
    while diagnostics.registrations_per_herald.len() > 1
        && diagnostics.registrations_per_herald.last() == Some(&0)
    {
        diagnostics.registrations_per_herald.pop();
    }

    let per_channel: Vec<(Vec<u64>, ChannelStats)> = primary
        .into_par_iter()
        .enumerate()
        .map(|(i, mut times)| {
            let det = &detectors[i];
            let ch = channel_of(i);
            let darks = poisson_times(det.dark_rate_hz, total_ps, seed, Purpose::Darks, ch as u64);
            let mut stats = ChannelStats {
                signal: signal_counts[i],
                dark: darks.len() as u64,
                ..ChannelStats::default()
            };
            times.extend(darks);
            let mut rng = substream(seed, Purpose::Afterpulses, ch as u64);
            let out = apply_detector_dynamics(times, det, &mut rng, &mut stats);
            (out, stats)
        })
        .collect();

    let herald_offset = setup.offsets.get(HERALD_CHANNEL) * PS_PER_S;
    let mut tags: Vec<TimeTag> = herald_times
        .iter()
        .map(|&t| TimeTag::new(HERALD_CHANNEL, (t as f64 + herald_offset).round() as u64))
        .collect();
    diagnostics.channels.insert(
        HERALD_CHANNEL,
        ChannelStats {
            signal: herald_times.len() as u64,
            recorded: herald_times.len() as u64,
            ..ChannelStats::default()
        },
    );
    for (i, (times, stats)) in per_channel.into_iter().enumerate() {
        let ch = channel_of(i);
        tags.extend(times.into_iter().map(|t| TimeTag::new(ch, t)));
        diagnostics.channels.insert(ch, stats);
    }
    tags.par_sort_unstable();

    let mut channels = vec![HERALD_CHANNEL];
    channels.extend((0..detectors.len()).map(channel_of));
    let header = StreamHeader {
        channels,
        ..heralds.header.clone()
    };
    Ok(SimOutput {
        stream: TagStream::new(header, tags),
        diagnostics,
    })
}

/// Time-orders one detector's primary clicks, spawns afterpulses from every
/// accepted click and removes clicks that fall within the dead time of the
/// previously accepted one (non-paralyzable).
fn apply_detector_dynamics(
    mut primary: Vec<u64>,
    det: &DetectorSpec,
    rng: &mut ChaCha8Rng,
    stats: &mut ChannelStats,
) -> Vec<u64> {
    primary.sort_unstable();
    let dead = (det.dead_time_s * PS_PER_S).round() as u64;
    let afterpulse_delay = Exp::new(1.0 / (det.afterpulse_mean_delay_s * PS_PER_S)).ok();
    let mut pending: BinaryHeap<Reverse<u64>> = BinaryHeap::new();
    let mut out = Vec::with_capacity(primary.len());
    let mut last: Option<u64> = None;
    let mut next_primary = primary.into_iter().peekable();
    loop {
        let from_pending = match (next_primary.peek(), pending.peek()) {
            (None, None) => break,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (Some(&p), Some(&Reverse(a))) => a < p,
        };
        let t = if from_pending {
            pending.pop().map(|Reverse(a)| a)
        } else {
            next_primary.next()
        }
        .expect("peeked");
        if last.is_some_and(|l| t < l + dead) {
            stats.dead_time_losses += 1;
            continue;
        }
        out.push(t);
        last = Some(t);
        if from_pending {
            stats.afterpulse += 1;
        }
        if det.afterpulse_prob > 0.0 && rng.random::<f64>() < det.afterpulse_prob {
            if let Some(d) = &afterpulse_delay {
                pending.push(Reverse(t + d.sample(rng).round() as u64));
            }
        }
    }
    stats.recorded = out.len() as u64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::IntensityProfile;

    fn two_spot_profile() -> IntensityProfile {
        IntensityProfile::from_samples(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn heralds_are_poissonian() {
        let src = SourceSpec::default();
        let s = generate_heralds(&src, 10.0, 5).unwrap();
        let n = s.len() as f64;
        assert!((n - 1e6).abs() < 4.0 * 1e3, "{n}");
        assert!(s.tags.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.tags.last().unwrap().t_ps < 10_000_000_000_000);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(matches!(
            generate_heralds(&SourceSpec::default(), 0.0, 1),
            Err(SimError::InvalidDuration(_))
        ));
        assert!(generate_heralds(&SourceSpec::default(), -1.0, 1).is_err());
    }

    #[test]
    fn heralds_deterministic_per_seed() {
        let src = SourceSpec::default();
        let a = generate_heralds(&src, 2.5, 11).unwrap();
        let b = generate_heralds(&src, 2.5, 11).unwrap();
        let c = generate_heralds(&src, 2.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tags, c.tags);
    }

    #[test]
    fn dead_time_and_afterpulses() {
        let det = DetectorSpec {
            dead_time_s: 10e-12,
            afterpulse_prob: 0.0,
            ..DetectorSpec::default()
        };
        let mut rng = substream(1, Purpose::Afterpulses, 0);
        let mut stats = ChannelStats::default();
        let out = apply_detector_dynamics(vec![30, 0, 5, 10, 19, 21], &det, &mut rng, &mut stats);
        assert_eq!(out, vec![0, 10, 21]);
        assert_eq!(stats.dead_time_losses, 3);

        let det = DetectorSpec {
            dead_time_s: 0.0,
            afterpulse_prob: 0.5,
            afterpulse_mean_delay_s: 1e-9,
            ..DetectorSpec::default()
        };
        let mut stats = ChannelStats::default();
        let primary: Vec<u64> = (0..20_000).map(|i| i * 1_000_000).collect();
        let out = apply_detector_dynamics(primary, &det, &mut rng, &mut stats);
        // geometric cascade: each accepted click spawns one with p = 0.5
        let expected = 20_000.0;
        assert!((stats.afterpulse as f64 - expected).abs() < 5.0 * expected.sqrt() * 1.5);
        assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fock_exclusivity_lossless() {
        let src = SourceSpec {
            herald_rate_hz: 1e5,
            path_efficiency: 1.0,
            ..SourceSpec::default()
        };
        let heralds = generate_heralds(&src, 0.5, 3).unwrap();
        let dets = [DetectorSpec::ideal(-1.0, 1.0), DetectorSpec::ideal(1.0, 1.0)];
        let profile = two_spot_profile();
        let offsets = ChannelOffsets::default();
        let setup = PropagationSetup {
            source: &src,
            profile: &profile,
            detectors: &dets,
            model: CollapseModel::Instantaneous,
            offsets: &offsets,
        };
        let out = propagate_and_detect(&heralds, &setup, 3).unwrap();
        let d = &out.diagnostics;
        assert_eq!(d.max_registrations_per_herald(), 1);
        // every photon lands in a covered region and registers
        assert_eq!(d.registrations_per_herald, vec![0, heralds.len() as u64]);
        let n2 = out.stream.count(2) as u64;
        let n3 = out.stream.count(3) as u64;
        assert_eq!(n2 + n3, heralds.len() as u64);
    }

    #[test]
    fn dark_counts_only_when_path_blocked() {
        let src = SourceSpec {
            path_efficiency: 0.0,
            herald_rate_hz: 1e3,
            ..SourceSpec::default()
        };
        let heralds = generate_heralds(&src, 100.0, 9).unwrap();
        let det = DetectorSpec {
            afterpulse_prob: 0.0,
            ..DetectorSpec::default()
        };
        let profile = two_spot_profile();
        let offsets = ChannelOffsets::default();
        let setup = PropagationSetup {
            source: &src,
            profile: &profile,
            detectors: &[det],
            model: CollapseModel::Instantaneous,
            offsets: &offsets,
        };
        let out = propagate_and_detect(&heralds, &setup, 9).unwrap();
        let n = out.stream.count(2) as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0, "{n}");
        assert_eq!(out.diagnostics.channels[&2].signal, 0);
    }

    #[test]
    fn errors_on_bad_detector_lists() {
        let src = SourceSpec::default();
        let heralds = generate_heralds(&src, 0.01, 1).unwrap();
        let profile = two_spot_profile();
        let offsets = ChannelOffsets::default();
        let mut setup = PropagationSetup {
            source: &src,
            profile: &profile,
            detectors: &[],
            model: CollapseModel::Instantaneous,
            offsets: &offsets,
        };
        assert!(matches!(propagate_and_detect(&heralds, &setup, 1), Err(SimError::NoDetectors)));
        let dets = [DetectorSpec::ideal(0.0, 1.0), DetectorSpec::ideal(0.5, 1.0)];
        setup.detectors = &dets;
        assert!(matches!(
            propagate_and_detect(&heralds, &setup, 1),
            Err(SimError::OverlappingApertures { .. })
        ));
    }

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
    }
}
