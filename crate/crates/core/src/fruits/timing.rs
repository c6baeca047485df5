//! Latency tracks and a single-core stage timer.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Track {
    #[serde(rename = "FRUITS100")]
    Fruits100,
    #[serde(rename = "FRUITS500")]
    Fruits500,
    #[serde(rename = "FRUITS1000")]
    Fruits1000,
    #[serde(rename = "OverBudget")]
    OverBudget,
}

impl Track {
    pub fn limit_ms(self) -> Option<f64> {
        match self {
            Track::Fruits100 => Some(100.0),
            Track::Fruits500 => Some(500.0),
            Track::Fruits1000 => Some(1000.0),
            Track::OverBudget => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackBudget {
    pub track: Track,
    pub limit_ms: Option<f64>,
}

/// The tightest track whose budget (inclusive) admits `measured_ms`.
pub fn classify_track(measured_ms: f64) -> Result<TrackBudget> {
    if measured_ms.is_nan() || measured_ms < 0.0 {
        return Err(Error::NegativeMeasurement(measured_ms));
    }
    let track = [Track::Fruits100, Track::Fruits500, Track::Fruits1000]
        .into_iter()
        .find(|t| measured_ms <= t.limit_ms().unwrap())
        .unwrap_or(Track::OverBudget);
    Ok(TrackBudget {
        track,
        limit_ms: track.limit_ms(),
    })
}

type StageFn<'a> = Box<dyn FnMut() -> std::result::Result<(), String> + 'a>;

/// A named pipeline step.
pub struct Stage<'a> {
    pub name: String,
    run: StageFn<'a>,
}

impl<'a> Stage<'a> {
    pub fn new(name: impl Into<String>, run: impl FnMut() -> std::result::Result<(), String> + 'a) -> Self {
        Stage {
            name: name.into(),
            run: Box::new(run),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub repetitions: usize,
    pub warmup: usize,
    pub pin_single_core: bool,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            repetitions: 5,
            warmup: 3,
            pin_single_core: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTiming {
    pub name: String,
    pub median_ms: f64,
    pub samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingReport {
    pub stages: Vec<StageTiming>,
    /// Sum of the stage medians.
    pub total_ms: f64,
    pub repetitions: usize,
    pub warmup: usize,
    /// How the single-core request was honored.
    pub affinity: String,
    pub track: TrackBudget,
}

fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

#[cfg(target_os = "linux")]
mod affinity {
    use std::mem::{size_of, zeroed};

    /// Restores the previous CPU mask of the calling thread on drop.
    pub struct Pinned {
        previous: Option<libc::cpu_set_t>,
        pub description: String,
    }

    impl Pinned {
        pub fn new() -> Self {
            // SAFETY: cpu_set_t is plain data; pid 0 addresses the calling thread.
            unsafe {
                let mut previous: libc::cpu_set_t = zeroed();
                if libc::sched_getaffinity(0, size_of::<libc::cpu_set_t>(), &mut previous) != 0 {
                    return Self::unavailable("sched_getaffinity failed");
                }
                let Some(cpu) = (0..libc::CPU_SETSIZE as usize).find(|&c| libc::CPU_ISSET(c, &previous)) else {
                    return Self::unavailable("empty cpu mask");
                };
                let mut one: libc::cpu_set_t = zeroed();
                libc::CPU_SET(cpu, &mut one);
                if libc::sched_setaffinity(0, size_of::<libc::cpu_set_t>(), &one) != 0 {
                    return Self::unavailable("sched_setaffinity failed");
                }
                Pinned {
                    previous: Some(previous),
                    description: format!("pinned to cpu {cpu}"),
                }
            }
        }

        pub fn unavailable(reason: &str) -> Self {
            Pinned {
                previous: None,
                description: format!("not pinned: {reason}"),
            }
        }
    }

    impl Drop for Pinned {
        fn drop(&mut self) {
            if let Some(prev) = &self.previous {
                // SAFETY: restores a mask previously returned by the kernel.
                unsafe {
                    libc::sched_setaffinity(0, size_of::<libc::cpu_set_t>(), prev);
                }
            }
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod affinity {
    pub struct Pinned {
        pub description: String,
    }

    impl Pinned {
        pub fn new() -> Self {
            Self::unavailable("unsupported platform")
        }

        pub fn unavailable(reason: &str) -> Self {
            Pinned {
                description: format!("not pinned: {reason}"),
            }
        }
    }
}

/// Runs the stages in order `warmup` times untimed, then `repetitions` times
/// timed, on the calling thread.
pub fn measure_pipeline(stages: &mut [Stage<'_>], config: &TimingConfig) -> Result<TimingReport> {
    if config.repetitions == 0 {
        return Err(Error::InvalidConfig("bench.repetitions must be >= 1".into()));
    }
    if stages.is_empty() {
        return Err(Error::EmptyInput("pipeline stages"));
    }
    let pinned = if config.pin_single_core {
        affinity::Pinned::new()
    } else {
        affinity::Pinned::unavailable("disabled by configuration")
    };
    let mut samples = vec![Vec::with_capacity(config.repetitions); stages.len()];
    for rep in 0..config.warmup + config.repetitions {
        for (stage, out) in stages.iter_mut().zip(samples.iter_mut()) {
            let start = Instant::now();
            (stage.run)().map_err(|reason| Error::Stage {
                stage: stage.name.clone(),
                reason,
            })?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if rep >= config.warmup {
                out.push(ms);
            }
        }
    }
    let timings: Vec<StageTiming> = stages
        .iter()
        .zip(samples)
        .map(|(stage, samples_ms)| StageTiming {
            name: stage.name.clone(),
            median_ms: median(&samples_ms),
            samples_ms,
        })
        .collect();
    let total_ms = timings.iter().map(|t| t.median_ms).sum();
    Ok(TimingReport {
        stages: timings,
        total_ms,
        repetitions: config.repetitions,
        warmup: config.warmup,
        affinity: pinned.description.clone(),
        track: classify_track(total_ms)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(classify_track(97.0).unwrap().track, Track::Fruits100);
        assert_eq!(classify_track(481.0).unwrap().track, Track::Fruits500);
        assert_eq!(classify_track(892.0).unwrap().track, Track::Fruits1000);
        assert_eq!(classify_track(1300.0).unwrap().track, Track::OverBudget);
    }

    #[test]
    fn boundaries_inclusive() {
        assert_eq!(classify_track(0.0).unwrap().track, Track::Fruits100);
        assert_eq!(classify_track(100.0).unwrap().track, Track::Fruits100);
        assert_eq!(classify_track(100.000_001).unwrap().track, Track::Fruits500);
        assert_eq!(classify_track(500.0).unwrap().track, Track::Fruits500);
        assert_eq!(classify_track(1000.0).unwrap().track, Track::Fruits1000);
        assert_eq!(classify_track(1000.5).unwrap().limit_ms, None);
        assert!(classify_track(-1.0).is_err());
        assert!(classify_track(f64::NAN).is_err());
    }

    #[test]
    fn zero_work_is_fast() {
        let mut stages = [Stage::new("noop", || Ok(()))];
        let r = measure_pipeline(&mut stages, &TimingConfig::default()).unwrap();
        assert!(r.total_ms < 1.0);
        assert_eq!(r.stages[0].samples_ms.len(), 5);
    }

    #[test]
    fn warmup_runs_are_discarded() {
        let mut calls = 0;
        {
            let mut stages = [Stage::new("count", || {
                calls += 1;
                Ok(())
            })];
            let cfg = TimingConfig {
                repetitions: 4,
                warmup: 3,
                pin_single_core: false,
            };
            let r = measure_pipeline(&mut stages, &cfg).unwrap();
            assert_eq!(r.stages[0].samples_ms.len(), 4);
            assert!(r.affinity.starts_with("not pinned"));
        }
        assert_eq!(calls, 7);
    }

    #[test]
    fn stage_error_names_stage() {
        let mut stages = [Stage::new("ok", || Ok(())), Stage::new("detect", || Err("no face".into()))];
        match measure_pipeline(&mut stages, &TimingConfig::default()) {
            Err(Error::Stage { stage, reason }) => {
                assert_eq!(stage, "detect");
                assert_eq!(reason, "no face");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
