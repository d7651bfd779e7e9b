//! Corpus composition: which classes, how many replicates, and the
//! per-sample seed derivation. The same composition drives both the
//! `gen-corpus` CLI command and the in-memory corpora used by tests.

use super::{derive_seed, simulate_capture, ClassLabel, GeneratorParams, SpectralCube};
use crate::config::Config;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Adulteration,
    Reheat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// Composition of a corpus, read from the same config file as the
/// generator parameters.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub kind: CorpusKind,
    /// Adulteration: calibration fractions (must include 0).
    pub train_fractions: Vec<f64>,
    pub replicates: usize,
    /// Adulteration: held-out fractions, one sample each.
    pub validation_fractions: Vec<f64>,
    /// Reheat: heat-cycle classes (must include 0).
    pub heat_cycles: Vec<u32>,
    pub train_captures: usize,
    pub test_captures: usize,
}

impl CorpusSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let has_fractions = cfg.get("train_fractions").is_some();
        let has_cycles = cfg.get("heat_cycles").is_some();
        match (has_fractions, has_cycles) {
            (true, false) => {
                let train_fractions = cfg.require_f64_list("train_fractions")?;
                let replicates = cfg.require_usize("replicates")?;
                let validation_fractions = cfg
                    .get_f64_list("validation_fractions")?
                    .unwrap_or_default();
                if !train_fractions.contains(&0.0) {
                    return Err(Error::config("train_fractions must include 0"));
                }
                if replicates == 0 {
                    return Err(Error::config("replicates must be positive"));
                }
                Ok(CorpusSpec {
                    kind: CorpusKind::Adulteration,
                    train_fractions,
                    replicates,
                    validation_fractions,
                    heat_cycles: Vec::new(),
                    train_captures: 0,
                    test_captures: 0,
                })
            }
            (false, true) => {
                let cycles = cfg.require_f64_list("heat_cycles")?;
                let heat_cycles: Vec<u32> = cycles.iter().map(|&c| c as u32).collect();
                if heat_cycles
                    .iter()
                    .zip(&cycles)
                    .any(|(&i, &f)| i as f64 != f)
                {
                    return Err(Error::config("heat_cycles must be integers"));
                }
                if !heat_cycles.contains(&0) {
                    return Err(Error::config("heat_cycles must include 0 (pure oil)"));
                }
                let train_captures = cfg.require_usize("train_captures")?;
                let test_captures = cfg.get_usize("test_captures")?.unwrap_or(0);
                if train_captures == 0 {
                    return Err(Error::config("train_captures must be positive"));
                }
                Ok(CorpusSpec {
                    kind: CorpusKind::Reheat,
                    train_fractions: Vec::new(),
                    replicates: 0,
                    validation_fractions: Vec::new(),
                    heat_cycles,
                    train_captures,
                    test_captures,
                })
            }
            (true, true) => Err(Error::config(
                "config declares both train_fractions and heat_cycles; one corpus kind per file",
            )),
            (false, false) => Err(Error::config(
                "config declares neither train_fractions nor heat_cycles",
            )),
        }
    }
}

/// One generated sample: a raw capture and its paired dark frame.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub sample_id: String,
    pub split: Split,
    pub label: ClassLabel,
    pub raw: SpectralCube,
    pub dark: SpectralCube,
}

/// Generate every sample of a corpus. Sample seeds derive from the base
/// seed and the sample's position in the fixed enumeration order, so a
/// corpus is a pure function of `(params, spec, seed)`.
pub fn generate_corpus(
    params: &GeneratorParams,
    spec: &CorpusSpec,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    match spec.kind {
        CorpusKind::Adulteration => {
            for (ci, &fraction) in spec.train_fractions.iter().enumerate() {
                for rep in 0..spec.replicates {
                    out.push(make_sample(
                        params,
                        ClassLabel::AdulterationFraction(fraction),
                        Split::Train,
                        format!("adu-{fraction:.3}-r{rep:02}"),
                        derive_seed(seed, salt(0, ci, rep)),
                    )?);
                }
            }
            for (ci, &fraction) in spec.validation_fractions.iter().enumerate() {
                out.push(make_sample(
                    params,
                    ClassLabel::AdulterationFraction(fraction),
                    Split::Validation,
                    format!("adu-{fraction:.3}-v00"),
                    derive_seed(seed, salt(1, ci, 0)),
                )?);
            }
        }
        CorpusKind::Reheat => {
            for (ci, &cycles) in spec.heat_cycles.iter().enumerate() {
                for rep in 0..spec.train_captures {
                    out.push(make_sample(
                        params,
                        ClassLabel::HeatCycles(cycles),
                        Split::Train,
                        format!("heat-{cycles}-r{rep:02}"),
                        derive_seed(seed, salt(0, ci, rep)),
                    )?);
                }
                for rep in 0..spec.test_captures {
                    out.push(make_sample(
                        params,
                        ClassLabel::HeatCycles(cycles),
                        Split::Validation,
                        format!("heat-{cycles}-t{rep:02}"),
                        derive_seed(seed, salt(1, ci, rep)),
                    )?);
                }
            }
        }
    }
    Ok(out)
}

fn salt(split: usize, class_index: usize, replicate: usize) -> u64 {
    (split as u64) << 40 | (class_index as u64) << 20 | replicate as u64
}

fn make_sample(
    params: &GeneratorParams,
    label: ClassLabel,
    split: Split,
    sample_id: String,
    seed: u64,
) -> Result<SampleRecord> {
    let (raw, dark) = simulate_capture(label, params, seed, &sample_id)?;
    Ok(SampleRecord {
        sample_id,
        split,
        label,
        raw,
        dark,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::BAND_COUNT;

    fn tiny_params() -> GeneratorParams {
        GeneratorParams::new(
            8,
            8,
            10,
            10.0,
            1.0,
            [2.0; BAND_COUNT],
            vec![(0.0, [500.0; BAND_COUNT]), (1.0, [100.0; BAND_COUNT])],
            vec![(0, [400.0; BAND_COUNT]), (1, [380.0; BAND_COUNT])],
        )
        .unwrap()
    }

    #[test]
    fn adulteration_corpus_enumerates_train_and_validation() {
        let cfg = Config::parse(
            "train_fractions=0,0.2,0.4\nreplicates=2\nvalidation_fractions=0.1,0.3\n",
        )
        .unwrap();
        let spec = CorpusSpec::from_config(&cfg).unwrap();
        let corpus = generate_corpus(&tiny_params(), &spec, 11).unwrap();
        assert_eq!(corpus.len(), 3 * 2 + 2);
        assert_eq!(corpus.iter().filter(|s| s.split == Split::Train).count(), 6);
        // distinct seeds give distinct pixel data
        assert_ne!(corpus[0].raw, corpus[1].raw);
    }

    #[test]
    fn corpus_is_deterministic_in_seed() {
        let cfg = Config::parse("heat_cycles=0,1\ntrain_captures=2\ntest_captures=1\n").unwrap();
        let spec = CorpusSpec::from_config(&cfg).unwrap();
        let a = generate_corpus(&tiny_params(), &spec, 5).unwrap();
        let b = generate_corpus(&tiny_params(), &spec, 5).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.raw, y.raw);
            assert_eq!(x.dark, y.dark);
        }
    }

    #[test]
    fn spec_requires_reference_class() {
        let cfg = Config::parse("train_fractions=0.1,0.2,0.3\nreplicates=2\n").unwrap();
        assert!(CorpusSpec::from_config(&cfg).is_err());
        let cfg = Config::parse("heat_cycles=1,2\ntrain_captures=2\n").unwrap();
        assert!(CorpusSpec::from_config(&cfg).is_err());
    }
}
