//! Synthetic paired activity windows.
//!
//! Every (user, class, repetition) draws a latent oscillation (frequency,
//! phase, amplitude). Class `k` sets the base frequency `f0 * (1 + k/2)`,
//! scaled by a per-user tempo. Each modality renders the latent through its
//! own deterministic transform: the sine family places phase-shifted sines on
//! its channels, the mixed-cosine family passes phase-shifted cosines through
//! a fixed per-modality channel mixing matrix. Users also carry per-channel
//! gains, and each window receives independent Gaussian noise.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paired::{ModalityWindow, PairedDataset};
use crate::seed::{self, Rng};

/// Base frequency in cycles per window for class 0.
pub const BASE_CYCLES: f64 = 2.0;
const TEMPO_SPREAD: f64 = 0.05;
const JITTER: f64 = 0.03;
const GAIN_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFamily {
    Sine,
    MixedCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub id: String,
    pub channels: usize,
    pub timesteps: usize,
    pub family: SignalFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_count: usize,
    pub modality_specs: Vec<ModalitySpec>,
    pub users: usize,
    pub samples_per_user_per_class: usize,
    pub noise_sigma: f64,
    pub correlation_strength: f64,
}

impl SynthSpec {
    /// Two modalities ("acc", sine family; "gyro", mixed-cosine family)
    /// sharing a `channels × timesteps` shape.
    pub fn two_modality(
        class_count: usize,
        users: usize,
        samples_per_user_per_class: usize,
        channels: usize,
        timesteps: usize,
    ) -> Self {
        SynthSpec {
            class_count,
            modality_specs: vec![
                ModalitySpec {
                    id: "acc".into(),
                    channels,
                    timesteps,
                    family: SignalFamily::Sine,
                },
                ModalitySpec {
                    id: "gyro".into(),
                    channels,
                    timesteps,
                    family: SignalFamily::MixedCosine,
                },
            ],
            users,
            samples_per_user_per_class,
            noise_sigma: 0.1,
            correlation_strength: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Input(m));
        if self.class_count < 2 {
            return fail(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.modality_specs.len() < 2 {
            return fail("at least two modalities are required".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.correlation_strength) {
            return fail(format!(
                "correlation_strength must lie in [0, 1], got {}",
                self.correlation_strength
            ));
        }
        if self.users == 0 || self.samples_per_user_per_class == 0 {
            return fail("users and samples_per_user_per_class must be positive".into());
        }
        for m in &self.modality_specs {
            if m.timesteps < 8 {
                return fail(format!(
                    "modality {:?}: {} timesteps is too short (minimum 8)",
                    m.id, m.timesteps
                ));
            }
            if m.channels == 0 {
                return fail(format!("modality {:?} has no channels", m.id));
            }
        }
        let mut ids: Vec<&str> = self.modality_specs.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("modality ids must be unique".into());
        }
        Ok(())
    }
}

/// The oscillation one modality renders for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    /// Cycles per window.
    pub cycles: f64,
    pub phase: f64,
    pub amplitude: f64,
}

/// Fixed channel mixing for modality position `m`: identity plus a
/// deterministic perturbation, rows scaled to unit norm.
pub fn mixing_matrix(m: usize, channels: usize) -> Vec<f64> {
    let mut rng = seed::stream(m as u64, "mixing");
    let mut out = vec![0.0; channels * channels];
    for r in 0..channels {
        let row = &mut out[r * channels..(r + 1) * channels];
        for (c, v) in row.iter_mut().enumerate() {
            *v = if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.5..0.5);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Noise-free rendering of `latent` for the modality at position `m`.
/// `gains` are the per-channel user gains.
pub fn render(spec: &ModalitySpec, m: usize, latent: &Latent, gains: &[f64]) -> Vec<f64> {
    let (c, t) = (spec.channels, spec.timesteps);
    let theta = |ti: usize| 2.0 * PI * latent.cycles * ti as f64 / t as f64 + latent.phase;
    let mut base = vec![0.0; c * t];
    for ci in 0..c {
        let shift = ci as f64 * PI / 3.0;
        for ti in 0..t {
            base[ci * t + ti] = latent.amplitude
                * match spec.family {
                    SignalFamily::Sine => (theta(ti) + shift).sin(),
                    SignalFamily::MixedCosine => (theta(ti) + shift).cos(),
                };
        }
    }
    let mut out = match spec.family {
        SignalFamily::Sine => base,
        SignalFamily::MixedCosine => {
            let mix = mixing_matrix(m, c);
            let mut out = vec![0.0; c * t];
            for r in 0..c {
                for k in 0..c {
                    let w = mix[r * c + k];
                    for ti in 0..t {
                        out[r * t + ti] += w * base[k * t + ti];
                    }
                }
            }
            out
        }
    };
    for (ci, g) in gains.iter().enumerate().take(c) {
        out[ci * t..(ci + 1) * t].iter_mut().for_each(|v| *v *= g);
    }
    out
}

/// Per-sample generation record, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub class: usize,
    pub user: u32,
    /// One latent per modality.
    pub latents: Vec<Latent>,
    /// Per-modality per-channel user gains.
    pub gains: Vec<Vec<f64>>,
}

pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<PairedDataset> {
    generate_synthetic_traced(spec, seed).map(|(ds, _)| ds)
}

pub fn generate_synthetic_traced(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(PairedDataset, Vec<SampleTrace>)> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let nm = spec.modality_specs.len();
    let c = spec.correlation_strength;
    let mut windows: Vec<Vec<ModalityWindow>> = vec![Vec::new(); nm];
    let mut traces = Vec::new();

    for user in 0..spec.users {
        let tempo = 1.0 + rng.gen_range(-TEMPO_SPREAD..TEMPO_SPREAD);
        let gains: Vec<Vec<f64>> = spec
            .modality_specs
            .iter()
            .map(|m| {
                (0..m.channels)
                    .map(|_| 1.0 + rng.gen_range(-GAIN_SPREAD..GAIN_SPREAD))
                    .collect()
            })
            .collect();
        for class in 0..spec.class_count {
            let cycles = BASE_CYCLES * (1.0 + class as f64 / 2.0) * tempo;
            for _ in 0..spec.samples_per_user_per_class {
                let shared = draw_latent(cycles, &mut rng);
                let latents: Vec<Latent> = (0..nm)
                    .map(|m| {
                        if m == 0 {
                            return shared;
                        }
                        let own = draw_latent(cycles, &mut rng);
                        Latent {
                            cycles: c * shared.cycles + (1.0 - c) * own.cycles,
                            phase: shared.phase + (1.0 - c) * (own.phase - shared.phase),
                            amplitude: c * shared.amplitude + (1.0 - c) * own.amplitude,
                        }
                    })
                    .collect();
                for (m, ms) in spec.modality_specs.iter().enumerate() {
                    let mut data = render(ms, m, &latents[m], &gains[m]);
                    if spec.noise_sigma > 0.0 {
                        for v in &mut data {
                            *v += spec.noise_sigma * noise.sample(&mut rng);
                        }
                    }
                    windows[m].push(ModalityWindow {
                        modality_id: ms.id.clone(),
                        channels: ms.channels,
                        timesteps: ms.timesteps,
                        data,
                        user_id: user as u32,
                        label: Some(class),
                    });
                }
                traces.push(SampleTrace {
                    class,
                    user: user as u32,
                    latents,
                    gains: gains.clone(),
                });
            }
        }
    }
    Ok((
        PairedDataset {
            modalities: spec.modality_specs.iter().map(|m| m.id.clone()).collect(),
            windows,
            class_count: spec.class_count,
        },
        traces,
    ))
}

fn draw_latent(cycles: f64, rng: &mut Rng) -> Latent {
    Latent {
        cycles: cycles * (1.0 + rng.gen_range(-JITTER..JITTER)),
        phase: rng.gen_range(0.0..2.0 * PI),
        amplitude: rng.gen_range(0.8..1.2),
    }
}
