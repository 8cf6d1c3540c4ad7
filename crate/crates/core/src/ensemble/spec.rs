use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeMatrix, ConePoint, REL_TOL};
use crate::error::{Error, Result};
use crate::runner::Stream;

const WEIGHT_TOL: f64 = 1e-12;
const MAX_REJECTIONS: u64 = 1_000_000;

/// On-disk form of an ensemble. Unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub dim: usize,
    pub delta: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorFile>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub weight: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub entry_log10_range: [f64; 2],
    pub b_log10_range: [f64; 2],
}

/// One point mass of a finitely supported law, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub a: ConeMatrix,
    pub b: ConePoint,
}

/// Parametric family: entries `10^U(lo, hi)`, each row then clamped up to
/// `δ·(row max)`; `B` coordinates `10^U(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub entry_log10_range: [f64; 2],
    pub b_log10_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Atoms(Vec<Atom>),
    Generator(Generator),
}

/// The law of the i.i.d. pairs `(A_n, B_n)`; every sampled matrix is
/// multiplied by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    dim: usize,
    delta: f64,
    scale: f64,
    law: Law,
}

impl EnsembleSpec {
    pub fn new(dim: usize, delta: f64, scale: f64, law: Law) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidSpec(format!("delta must lie in (0, 1], got {delta}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidSpec(format!("scale must be positive, got {scale}")));
        }
        match &law {
            Law::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::InvalidSpec("atoms list is empty".into()));
                }
                let mut total = 0.0;
                for (k, atom) in atoms.iter().enumerate() {
                    if !(atom.weight >= 0.0 && atom.weight.is_finite()) {
                        return Err(Error::InvalidSpec(format!(
                            "atoms[{k}].weight = {} is not a probability",
                            atom.weight
                        )));
                    }
                    if atom.a.dim() != dim || atom.b.dim() != dim {
                        return Err(Error::InvalidSpec(format!(
                            "atoms[{k}] has dimension {}/{}, expected {dim}",
                            atom.a.dim(),
                            atom.b.dim()
                        )));
                    }
                    total += atom.weight;
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidSpec(format!("weights sum to {total}, expected 1")));
                }
            }
            Law::Generator(g) => {
                if !(2..=crate::cone::MAX_DIM).contains(&dim) {
                    return Err(Error::Dimension(dim));
                }
                for (name, [lo, hi]) in [("entry_log10_range", g.entry_log10_range), ("b_log10_range", g.b_log10_range)] {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::InvalidSpec(format!("generator.{name} = [{lo}, {hi}] is not a range")));
                    }
                }
            }
        }
        Ok(Self {
            dim,
            delta,
            scale,
            law,
        })
    }

    pub fn from_file(file: SpecFile) -> Result<Self> {
        let law = match (file.atoms, file.generator) {
            (Some(atoms), None) => {
                let mut out = Vec::with_capacity(atoms.len());
                for (k, atom) in atoms.into_iter().enumerate() {
                    let a = ConeMatrix::from_rows(&atom.a)
                        .map_err(|e| Error::InvalidSpec(format!("atoms[{k}].A: {e}")))?;
                    let b = ConePoint::new(atom.b)
                        .map_err(|e| Error::InvalidSpec(format!("atoms[{k}].B: {e}")))?;
                    out.push(Atom {
                        weight: atom.weight,
                        a,
                        b,
                    });
                }
                Law::Atoms(out)
            }
            (None, Some(g)) => Law::Generator(Generator {
                entry_log10_range: g.entry_log10_range,
                b_log10_range: g.b_log10_range,
            }),
            _ => {
                return Err(Error::InvalidSpec(
                    "exactly one of `atoms` and `generator` must be given".into(),
                ))
            }
        };
        Self::new(file.dim, file.delta, file.scale, law)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> SpecFile {
        let (atoms, generator) = match &self.law {
            Law::Atoms(atoms) => (
                Some(
                    atoms
                        .iter()
                        .map(|a| AtomFile {
                            weight: a.weight,
                            a: a.a.rows(),
                            b: a.b.coords().to_vec(),
                        })
                        .collect(),
                ),
                None,
            ),
            Law::Generator(g) => (
                None,
                Some(GeneratorFile {
                    entry_log10_range: g.entry_log10_range,
                    b_log10_range: g.b_log10_range,
                }),
            ),
        };
        SpecFile {
            dim: self.dim,
            delta: self.delta,
            scale: self.scale,
            atoms,
            generator,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("spec serializes")
    }

    /// Dirac law at `(A, B)`.
    pub fn dirac(a: ConeMatrix, b: ConePoint) -> Result<Self> {
        let delta = a.s_delta_margin().clamp(f64::MIN_POSITIVE, 1.0);
        Self::new(a.dim(), delta, 1.0, Law::Atoms(vec![Atom { weight: 1.0, a, b }]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.law {
            Law::Atoms(a) => Some(a),
            Law::Generator(_) => None,
        }
    }

    /// Same law with `scale` replaced.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.dim, self.delta, scale, self.law.clone())
    }

    /// Same law with every matrix multiplied by an extra `factor`.
    pub fn scaled_by(&self, factor: f64) -> Result<Self> {
        self.with_scale(self.scale * factor)
    }

    /// Atoms with the scale folded into each matrix.
    pub fn scaled_atoms(&self) -> Option<Vec<Atom>> {
        self.atoms().map(|atoms| {
            atoms
                .iter()
                .map(|atom| Atom {
                    weight: atom.weight,
                    a: atom.a.scaled(self.scale).expect("scale is positive"),
                    b: atom.b.clone(),
                })
                .collect()
        })
    }

    pub fn sampler(&self) -> Sampler<'_> {
        let kind = match &self.law {
            Law::Atoms(_) => {
                let atoms = self.scaled_atoms().expect("atom law");
                let index = WeightedIndex::new(atoms.iter().map(|a| a.weight))
                    .expect("weights validated on construction");
                SamplerKind::Atoms { atoms, index }
            }
            Law::Generator(g) => SamplerKind::Generator {
                generator: *g,
                current: None,
            },
        };
        Sampler {
            spec: self,
            kind,
            rejections: 0,
        }
    }
}

enum SamplerKind {
    Atoms {
        atoms: Vec<Atom>,
        index: WeightedIndex<f64>,
    },
    Generator {
        generator: Generator,
        current: Option<(ConeMatrix, ConePoint)>,
    },
}

/// Draws `(scale·A, B)` pairs from an [`EnsembleSpec`].
pub struct Sampler<'a> {
    spec: &'a EnsembleSpec,
    kind: SamplerKind,
    rejections: u64,
}

impl<'a> Sampler<'a> {
    pub fn spec(&self) -> &'a EnsembleSpec {
        self.spec
    }

    /// Total generator draws rejected so far.
    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    #[inline]
    pub fn sample_pair(&mut self, rng: &mut Stream) -> Result<(&ConeMatrix, &ConePoint)> {
        match &mut self.kind {
            SamplerKind::Atoms { atoms, index } => {
                let atom = &atoms[index.sample(rng)];
                Ok((&atom.a, &atom.b))
            }
            SamplerKind::Generator { generator, current } => {
                let spec = self.spec;
                let mut consecutive = 0;
                let pair = loop {
                    match generate(spec, generator, rng) {
                        Some(pair) => break pair,
                        None => {
                            self.rejections += 1;
                            consecutive += 1;
                            if consecutive >= MAX_REJECTIONS {
                                return Err(Error::TooManyRejections(consecutive));
                            }
                        }
                    }
                };
                *current = Some(pair);
                let (a, b) = current.as_ref().expect("just stored");
                Ok((a, b))
            }
        }
    }
}

fn generate(spec: &EnsembleSpec, g: &Generator, rng: &mut Stream) -> Option<(ConeMatrix, ConePoint)> {
    let d = spec.dim;
    let draw = |rng: &mut Stream, [lo, hi]: [f64; 2]| {
        let e = if lo < hi { rng.gen_range(lo..hi) } else { lo };
        10f64.powf(e)
    };
    let mut entries: Vec<f64> = (0..d * d).map(|_| draw(rng, g.entry_log10_range)).collect();
    for row in entries.chunks_mut(d) {
        let floor = spec.delta * row.iter().copied().fold(0.0, f64::max);
        row.iter_mut().for_each(|v| *v = v.max(floor) * spec.scale);
    }
    let b: Vec<f64> = (0..d).map(|_| draw(rng, g.b_log10_range)).collect();
    let a = ConeMatrix::new(d, entries).ok()?;
    if a.s_delta_margin() < spec.delta * (1.0 - REL_TOL) {
        return None;
    }
    Some((a, ConePoint::new(b).ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Runner;

    fn two_atoms() -> EnsembleSpec {
        EnsembleSpec::from_json(
            r#"{"dim": 2, "delta": 1, "scale": 1,
                "atoms": [{"weight": 0.5, "A": [[1,1],[1,1]], "B": [1,1]},
                          {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,1]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn dirac_law_returns_its_atom() {
        let half = ConeMatrix::ones(2).unwrap().scaled(0.5).unwrap();
        let b = ConePoint::new(vec![1.0, 1.0]).unwrap();
        let spec = EnsembleSpec::dirac(half.clone(), b.clone()).unwrap();
        let mut sampler = spec.sampler();
        let mut rng = Runner::new(99).stream(0);
        for _ in 0..10 {
            let (a, bb) = sampler.sample_pair(&mut rng).unwrap();
            assert_eq!((a, bb), (&half, &b));
        }
    }

    #[test]
    fn equal_weights_give_balanced_frequencies() {
        let spec = two_atoms();
        let mut sampler = spec.sampler();
        let mut rng = Runner::new(1).stream(0);
        let n = 1_000_000;
        let mut first = 0u64;
        for _ in 0..n {
            if sampler.sample_pair(&mut rng).unwrap().0.col_max() == 2.0 {
                first += 1;
            }
        }
        let freq = first as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn scale_is_applied_to_sampled_matrices() {
        let spec = EnsembleSpec::dirac(ConeMatrix::ones(2).unwrap(), ConePoint::zero(2).unwrap())
            .unwrap()
            .with_scale(0.25)
            .unwrap();
        let mut rng = Runner::new(0).stream(0);
        let mut sampler = spec.sampler();
        let (a, _) = sampler.sample_pair(&mut rng).unwrap();
        assert!(a.entries().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn generator_output_is_in_s_delta_and_reproducible() {
        let spec = EnsembleSpec::from_json(
            r#"{"dim": 3, "delta": 0.5, "scale": 2.0,
                "generator": {"entry_log10_range": [-1, 1], "b_log10_range": [0, 0]}}"#,
        )
        .unwrap();
        let run = |seed| {
            let mut rng = Runner::new(seed).stream(5);
            let mut s = spec.sampler();
            let mut out = Vec::new();
            for _ in 0..200 {
                let (a, b) = s.sample_pair(&mut rng).unwrap();
                assert!(a.s_delta_margin() >= 0.5 * (1.0 - 1e-12));
                assert!(b.coords().iter().all(|&c| c == 1.0));
                out.push(a.clone());
            }
            assert_eq!(s.rejections(), 0);
            out
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let spec = two_atoms();
        assert_eq!(EnsembleSpec::from_json(&spec.to_json()).unwrap(), spec);

        let unknown = r#"{"dim": 2, "delta": 1, "extra": 3,
            "atoms": [{"weight": 1, "A": [[1,1],[1,1]], "B": [0,0]}]}"#;
        assert!(matches!(EnsembleSpec::from_json(unknown), Err(Error::Json(_))));

        let bad_weights = r#"{"dim": 2, "delta": 1,
            "atoms": [{"weight": 0.7, "A": [[1,1],[1,1]], "B": [0,0]}]}"#;
        assert!(matches!(EnsembleSpec::from_json(bad_weights), Err(Error::InvalidSpec(_))));

        // membership in S_delta is a hypothesis to check, not a parse error
        let not_s_delta = r#"{"dim": 2, "delta": 0.5,
            "atoms": [{"weight": 1, "A": [[1,0],[0,1]], "B": [0,0]}]}"#;
        assert!(EnsembleSpec::from_json(not_s_delta).is_ok());

        let wrong_dim = r#"{"dim": 3, "delta": 1,
            "atoms": [{"weight": 1, "A": [[1,1],[1,1]], "B": [0,0]}]}"#;
        assert!(matches!(EnsembleSpec::from_json(wrong_dim), Err(Error::InvalidSpec(_))));

        let both = r#"{"dim": 2, "delta": 1,
            "atoms": [{"weight": 1, "A": [[1,1],[1,1]], "B": [0,0]}],
            "generator": {"entry_log10_range": [0, 1], "b_log10_range": [0, 1]}}"#;
        assert!(EnsembleSpec::from_json(both).is_err());
    }
}
