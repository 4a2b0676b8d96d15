//! Definition files for kernels, maps, observables and densities.
//!
//! All schemas are TOML and reject unknown keys. Paths inside a file are resolved
//! relative to the directory of that file. See `configs/README.md` for the full schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use num_rational::Rational64;
use serde::Deserialize;

use crate::chain::{BandedKernel, Prob, StateVector};
use crate::error::{Error, Result};
use crate::maps::{
    build_finite_modification, build_quasi_lift, build_random_walk_map, Branch, Bump, BumpTerm,
    MarkovMap, Partition,
};
use crate::observables::{Base, Family, Observable, SequenceRule};
use crate::transfer::{CellwiseDensity, Density, GridDensity};

/// A probability or perturbation size written as `"5/9"`, `"0.25"` or a bare number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Text(String),
    Float(f64),
}

impl Number {
    pub fn prob(&self) -> Result<Prob> {
        match self {
            Number::Text(s) => s.trim().parse(),
            Number::Float(v) => format!("{v}").parse(),
        }
    }

    /// Exact rational value; floats are read through their shortest decimal form.
    pub fn rational(&self) -> Result<Rational64> {
        self.prob()?
            .exact()
            .ok_or_else(|| Error::Parse(format!("{self:?} is not an exact rational")))
    }
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn from_value<T: for<'de> Deserialize<'de>>(value: toml::Value, origin: &str) -> Result<T> {
    value.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("{origin}: {e}")))
}

/// Either a path to a definition file or the definition inline.
fn resolve<T: for<'de> Deserialize<'de>>(
    value: &toml::Value,
    base: &Path,
    what: &str,
) -> Result<(T, PathBuf)> {
    match value {
        toml::Value::String(p) => {
            let path = base.join(p);
            let text = read(&path)?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((parse_toml(&text, &path.display().to_string())?, dir))
        }
        other => Ok((from_value(other.clone(), what)?, base.to_path_buf())),
    }
}

// ---------------------------------------------------------------- kernels

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub band: usize,
    /// Entries at offsets `−band..=band`.
    pub stencil: Vec<Number>,
    #[serde(default)]
    pub exceptional: Vec<ExceptionalRow>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExceptionalRow {
    pub j: i64,
    pub row: Vec<Number>,
}

impl KernelFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_toml(text, "kernel")
    }

    pub fn build(&self) -> Result<BandedKernel> {
        let probs = |v: &[Number]| v.iter().map(Number::prob).collect::<Result<Vec<_>>>();
        let mut rows = BTreeMap::new();
        for r in &self.exceptional {
            if rows.insert(r.j, probs(&r.row)?).is_some() {
                return Err(Error::Kernel(format!("row {} given twice", r.j)));
            }
        }
        BandedKernel::new(self.band, probs(&self.stencil)?, rows)
    }
}

pub fn load_kernel(path: &Path) -> Result<BandedKernel> {
    parse_toml::<KernelFile>(&read(path)?, &path.display().to_string())?.build()
}

// ---------------------------------------------------------------- maps

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapFile {
    /// Branches over one period, repeated by translation.
    QuasiLift {
        /// Uniform cell length; exclusive with `breakpoints`.
        cell: Option<f64>,
        /// `0 = a_0 < a_1 < … < a_p`, one period of the partition.
        breakpoints: Option<Vec<f64>>,
        #[serde(rename = "branch")]
        branches: Vec<BranchSpec>,
    },
    FiniteModification {
        /// Path to, or inline table of, the base quasi-lift.
        base: toml::Value,
        #[serde(default = "default_bump")]
        bump: String,
        /// Perturbation sizes keyed by home cell.
        delta: BTreeMap<String, Number>,
    },
    RandomWalk {
        /// Path to, or inline table of, a kernel file.
        kernel: toml::Value,
    },
}

fn default_bump() -> String {
    "poly3".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub home: i64,
    /// First and last image cell.
    pub image: [i64; 2],
    /// Inverse branch `φ(y) = slope·y + offset` before perturbation.
    pub slope: f64,
    pub offset: f64,
    #[serde(default, rename = "perturbation")]
    pub perturbations: Vec<PerturbationSpec>,
}

/// `δ·ψ` added to the inverse piece landing in image cell `cell`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub cell: i64,
    pub delta: f64,
    #[serde(default = "default_bump")]
    pub bump: String,
}

impl MapFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_toml(text, "map")
    }

    pub fn build(&self, base: &Path) -> Result<MarkovMap> {
        match self {
            MapFile::QuasiLift { cell, breakpoints, branches } => {
                let part = match (cell, breakpoints) {
                    (Some(a), None) => Partition::uniform(*a)?,
                    (None, Some(b)) => Partition::periodic(b)?,
                    _ => {
                        return Err(Error::Parse(
                            "quasi-lift needs exactly one of `cell` or `breakpoints`".into(),
                        ))
                    }
                };
                let mut out = Vec::with_capacity(branches.len());
                for s in branches {
                    let mut b = Branch::from_affine_inverse(
                        &part,
                        s.home,
                        (s.image[0], s.image[1]),
                        s.slope,
                        s.offset,
                    )?;
                    for p in &s.perturbations {
                        let bump = Bump::from_id(&p.bump)?;
                        let piece = b.pieces.iter_mut().find(|q| q.cell == p.cell).ok_or_else(|| {
                            Error::Branch {
                                home: s.home,
                                reason: format!("no inverse piece onto cell {}", p.cell),
                            }
                        })?;
                        piece.bumps.push(BumpTerm { delta: p.delta, bump });
                    }
                    out.push(b);
                }
                build_quasi_lift(part, out)
            }
            MapFile::FiniteModification { base: b, bump, delta } => {
                let (file, dir): (MapFile, _) = resolve(b, base, "base map")?;
                let base_map = file.build(&dir)?;
                let mut deltas = BTreeMap::new();
                for (k, v) in delta {
                    let j: i64 = k
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("delta key `{k}` is not a cell index")))?;
                    deltas.insert(j, v.rational()?);
                }
                build_finite_modification(&base_map, &deltas, Bump::from_id(bump)?)
            }
            MapFile::RandomWalk { kernel } => {
                let (file, _): (KernelFile, _) = resolve(kernel, base, "kernel")?;
                build_random_walk_map(&file.build()?)
            }
        }
    }
}

pub fn load_map(path: &Path) -> Result<MarkovMap> {
    let file: MapFile = parse_toml(&read(path)?, &path.display().to_string())?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}

/// Loads a map from a path or inline table found inside another file.
pub fn map_from_value(value: &toml::Value, base: &Path) -> Result<MarkovMap> {
    let (file, dir): (MapFile, _) = resolve(value, base, "map")?;
    file.build(&dir)
}

pub fn kernel_from_value(value: &toml::Value, base: &Path) -> Result<BandedKernel> {
    let (file, _): (KernelFile, _) = resolve(value, base, "kernel")?;
    file.build()
}

// ---------------------------------------------------------------- observables

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `e^{iγx}`.
    Wave { gamma: f64 },
    /// `e^{iβx}·B(x)` with `B` of the given period.
    Quasiperiodic {
        beta: f64,
        period: f64,
        #[serde(default = "plain_base")]
        base: BaseSpec,
    },
    /// Constant on cells of a uniform partition, value given by a sequence rule.
    Cells {
        #[serde(default = "one")]
        cell: f64,
        rule: String,
        #[serde(default)]
        pattern: Vec<f64>,
        lo: Option<i64>,
        hi: Option<i64>,
    },
    Heaviside {},
    Indicator { lo: f64, hi: f64 },
    Combination { terms: Vec<TermSpec> },
    Cesaro { inner: Box<ObservableSpec>, period: f64, k: usize },
}

fn plain_base() -> BaseSpec {
    BaseSpec::One {}
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseSpec {
    One {},
    Cosine { harmonic: u32 },
    Step { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub observable: ObservableSpec,
}

impl ObservableSpec {
    pub fn build(&self) -> Result<Observable> {
        Ok(match self {
            ObservableSpec::Constant { re, im } => Observable::Constant(Complex64::new(*re, *im)),
            ObservableSpec::Wave { gamma } => Observable::wave(*gamma),
            ObservableSpec::Quasiperiodic { beta, period, base } => {
                if *period <= 0.0 {
                    return Err(Error::Parse(format!("period {period} must be positive")));
                }
                let base = match base {
                    BaseSpec::One {} => Base::One,
                    BaseSpec::Cosine { harmonic } => Base::Cosine { harmonic: *harmonic },
                    BaseSpec::Step { lo, hi } => Base::Step { lo: *lo, hi: *hi },
                };
                Observable::Quasiperiodic { beta: *beta, period: *period, base }
            }
            ObservableSpec::Cells { cell, rule, pattern, lo, hi } => {
                let rule = match (rule.as_str(), lo, hi) {
                    ("even", ..) => SequenceRule::Even,
                    ("odd", ..) => SequenceRule::Odd,
                    ("thue-morse-pairs", ..) => SequenceRule::ThueMorsePairs,
                    ("pattern", ..) if !pattern.is_empty() => SequenceRule::Pattern(pattern.clone()),
                    ("cells", Some(lo), Some(hi)) => SequenceRule::Cells { lo: *lo, hi: *hi },
                    _ => return Err(Error::Parse(format!("bad sequence rule `{rule}`"))),
                };
                Observable::CellSequence { partition: Partition::uniform(*cell)?, rule }
            }
            ObservableSpec::Heaviside {} => Observable::Heaviside,
            ObservableSpec::Indicator { lo, hi } => Observable::Indicator { lo: *lo, hi: *hi },
            ObservableSpec::Combination { terms } => Observable::Combination(
                terms
                    .iter()
                    .map(|t| Ok((Complex64::new(t.re, t.im), t.observable.build()?)))
                    .collect::<Result<_>>()?,
            ),
            ObservableSpec::Cesaro { inner, period, k } => {
                if *k == 0 {
                    return Err(Error::Parse("Cesàro order must be positive".into()));
                }
                Observable::Cesaro { inner: Box::new(inner.build()?), period: *period, k: *k }
            }
        })
    }
}

pub fn observable_from_value(value: &toml::Value, base: &Path) -> Result<Observable> {
    let (spec, _): (ObservableSpec, _) = resolve(value, base, "observable")?;
    spec.build()
}

pub fn parse_family(name: &str) -> Result<Family> {
    match name {
        "cell-unions" => Ok(Family::CellUnions),
        "centered-windows" => Ok(Family::CenteredWindows),
        _ => Err(Error::Parse(format!("unknown window family `{name}`"))),
    }
}

// ---------------------------------------------------------------- densities

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `g_{δ_j}`: indicator of cell `j` divided by its length.
    Delta { cell: i64 },
    /// `Σ c_i g_{π_i}` with each `π_i` given from its first cell on.
    Cellwise { components: Vec<ComponentSpec> },
    /// Grid sampling of `(1 − ((x − center)/width)²)^power` on `|x − center| < width`.
    Bump {
        center: f64,
        width: f64,
        #[serde(default = "four")]
        power: i32,
        #[serde(default = "sixty_four")]
        m: usize,
    },
}

fn four() -> i32 {
    4
}

fn sixty_four() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default = "one")]
    pub coefficient: f64,
    pub start: i64,
    pub weights: Vec<Number>,
}

impl DensitySpec {
    pub fn build(&self, map: &MarkovMap) -> Result<Density> {
        match self {
            DensitySpec::Delta { cell } => Ok(Density::Cellwise(CellwiseDensity::combination(
                vec![(1.0, StateVector::delta(*cell))],
            )?)),
            DensitySpec::Cellwise { components } => {
                let mut parts = Vec::with_capacity(components.len());
                for c in components {
                    let w = c.weights.iter().map(Number::rational).collect::<Result<Vec<_>>>()?;
                    parts.push((c.coefficient, StateVector::from_rationals(c.start, &w)?));
                }
                Ok(Density::Cellwise(CellwiseDensity::combination(parts)?))
            }
            DensitySpec::Bump { center, width, power, m } => {
                if *width <= 0.0 {
                    return Err(Error::Parse(format!("bump width {width} must be positive")));
                }
                let part = map.partition();
                let (lo, hi) = (part.cell_of(center - width), part.cell_of(center + width));
                let (c, w, p) = (*center, *width, *power);
                let g = GridDensity::from_fn(part, lo, hi, *m, move |x| {
                    let u = (x - c) / w;
                    if u.abs() < 1.0 {
                        (1.0 - u * u).powi(p)
                    } else {
                        0.0
                    }
                })?;
                Ok(Density::Grid(g))
            }
        }
    }
}

pub fn density_from_value(value: &toml::Value, base: &Path, map: &MarkovMap) -> Result<Density> {
    let (spec, _): (DensitySpec, _) = resolve(value, base, "density")?;
    spec.build(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE_POINT: &str = r#"
band = 2
stencil = ["1/9", "2/9", "3/9", "2/9", "1/9"]
[[exceptional]]
j = -1
row = ["1/9", "2/9", "5/9", "1/9", 0]
[[exceptional]]
j = 0
row = ["1/9", "1/9", "5/9", "1/9", "1/9"]
[[exceptional]]
j = 1
row = [0, "1/9", "5/9", "2/9", "1/9"]
"#;

    #[test]
    fn kernel_file_matches_builtin() {
        let k = KernelFile::parse(FIVE_POINT).unwrap().build().unwrap();
        assert_eq!(k, BandedKernel::five_point_defect());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{FIVE_POINT}\ncolour = 3\n");
        assert!(KernelFile::parse(&bad).is_err());
        let map = "variant = \"random-walk\"\nkernel = \"k.toml\"\nextra = 1\n";
        assert!(MapFile::parse(map).is_err());
        let obs: std::result::Result<ObservableSpec, _> = toml::from_str("kind = \"heaviside\"\nbeta = 1.0");
        assert!(obs.is_err());
    }

    #[test]
    fn inline_random_walk_map() {
        let text = format!("variant = \"random-walk\"\n[kernel]\n{FIVE_POINT}");
        let text = text.replace("[[exceptional]]", "[[kernel.exceptional]]");
        let map = MapFile::parse(&text).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(map.kind().name(), "random-walk");
    }

    #[test]
    fn doubling_with_bad_delta_sum_fails() {
        let text = r#"
variant = "finite-modification"
[base]
variant = "quasi-lift"
cell = 1.0
[[base.branch]]
home = 0
image = [0, 1]
slope = 0.5
offset = 0.0
[delta]
"-1" = "1/128"
"0" = "1/128"
"#;
        let err = MapFile::parse(text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::PerturbationSum { .. } | Error::PerturbationSet { .. }), "{err}");
    }

    #[test]
    fn observables_parse() {
        let spec: ObservableSpec = toml::from_str(
            "kind = \"combination\"\n[[terms]]\nre = 2.0\nobservable = { kind = \"heaviside\" }\n",
        )
        .unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.eval(1.0).re, 2.0);
        let spec: ObservableSpec =
            toml::from_str("kind = \"quasiperiodic\"\nbeta = 1.0\nperiod = 1.0\nbase = { shape = \"cosine\", harmonic = 1 }")
                .unwrap();
        assert!(spec.build().is_ok());
    }
}
