//! JSON forms of rules and spectral data, and a writer that prints every
//! float with 17 significant digits so values survive a round trip.

use std::io;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::cubature_ct::{build_h, CtRule};
use crate::cubature_dt::DtRule;
use crate::cubature_lifted::{LiftedRule, Provenance, SignedMeasureRule};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, spectral_with_structure, to_rows, BlockSpec, JordanBlock, SpectralInfo};
use crate::polynomials::{basis_indices, MonomialBasis};
use crate::tolerance::Tolerances;
use crate::Matrix;

/// Pretty JSON with floats as `{:.16e}`.
struct Precise<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for Precise<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Serializes `value` as pretty JSON with 17 significant digits per float
/// and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn matrix(rows: &[Vec<f64>], what: &'static str) -> Result<Matrix> {
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    from_rows(rows)
}

fn basis_for(points: &[Vec<f64>], d: Option<usize>, n: usize) -> Result<MonomialBasis> {
    let d = d
        .or_else(|| points.first().map(|p| p.len()))
        .ok_or_else(|| Error::InvalidArgument("cannot infer the dimension of an empty rule".into()))?;
    basis_indices(d, n)
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct CtRuleFile {
    pub points: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub n: usize,
    pub residual: f64,
}

impl CtRuleFile {
    pub fn from_rule(rule: &CtRule) -> Self {
        CtRuleFile {
            points: rule.points.clone(),
            l: to_rows(&rule.l),
            n: rule.basis.degree(),
            residual: rule.residual,
        }
    }

    pub fn into_rule(self) -> Result<CtRule> {
        let basis = basis_for(&self.points, None, self.n)?;
        let h = build_h(&self.points, &basis)?;
        let l = matrix(&self.l, "L")?;
        if l.nrows() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: l.nrows(),
            });
        }
        Ok(CtRule {
            points: self.points,
            basis,
            l,
            h,
            residual: self.residual,
        })
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct LiftedRuleFile {
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
    pub d: usize,
    pub n: usize,
    pub residual: f64,
}

impl LiftedRuleFile {
    pub fn from_rule(rule: &LiftedRule) -> Self {
        LiftedRuleFile {
            s: to_rows(&rule.s),
            l: to_rows(&rule.l),
            provenance: rule.provenance.clone(),
            d: rule.basis.dim(),
            n: rule.basis.degree(),
            residual: rule.residual,
        }
    }

    pub fn into_rule(self) -> Result<LiftedRule> {
        let basis = basis_indices(self.d, self.n)?;
        let s = matrix(&self.s, "S")?;
        let l = matrix(&self.l, "L")?;
        if s.ncols() != basis.len() || l.nrows() != s.nrows() || self.provenance.len() != s.nrows() {
            return Err(Error::InvalidArgument(format!(
                "lifted rule shapes disagree: S is {}x{}, L is {}x{}, {} provenance entries, basis size {}",
                s.nrows(),
                s.ncols(),
                l.nrows(),
                l.ncols(),
                self.provenance.len(),
                basis.len()
            )));
        }
        Ok(LiftedRule {
            basis,
            s,
            l,
            provenance: self.provenance,
            residual: self.residual,
        })
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct SignedMeasureRuleFile {
    pub points: Vec<Vec<f64>>,
    #[serde(rename = "S_tilde")]
    pub s_tilde: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub n: usize,
}

impl SignedMeasureRuleFile {
    pub fn from_rule(rule: &SignedMeasureRule) -> Self {
        SignedMeasureRuleFile {
            points: rule.points.clone(),
            s_tilde: to_rows(&rule.s_tilde),
            a: to_rows(&rule.a),
            n: rule.basis.degree(),
        }
    }

    pub fn into_rule(self) -> Result<SignedMeasureRule> {
        let basis = basis_for(&self.points, None, self.n)?;
        let h = build_h(&self.points, &basis)?;
        Ok(SignedMeasureRule {
            s_tilde: matrix(&self.s_tilde, "S_tilde")?,
            a: matrix(&self.a, "A")?,
            points: self.points,
            basis,
            h,
        })
    }
}

#[derive(Clone, Debug, SerializeDerive, Deserialize)]
pub struct DtRuleFile {
    pub points: Vec<Vec<f64>>,
    pub delta: f64,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub n: usize,
    pub residual: f64,
}

impl DtRuleFile {
    pub fn from_rule(rule: &DtRule) -> Self {
        DtRuleFile {
            points: rule.points.clone(),
            delta: rule.delta,
            q: to_rows(&rule.q),
            n: rule.basis.degree(),
            residual: rule.residual,
        }
    }

    pub fn into_rule(self) -> Result<DtRule> {
        let basis = basis_for(&self.points, None, self.n)?;
        let h = build_h(&self.points, &basis)?;
        let q = matrix(&self.q, "Q")?;
        if q.nrows() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: q.nrows(),
            });
        }
        Ok(DtRule {
            points: self.points,
            basis,
            delta: self.delta,
            q,
            h,
            residual: self.residual,
        })
    }
}

/// A rule file of any kind, recognised by its keys: `S` means lifted,
/// `S_tilde` signed measures, `Q` discrete, `L` with `points` continuous.
#[derive(Clone, Debug)]
pub enum RuleFile {
    Ct(CtRuleFile),
    Lifted(LiftedRuleFile),
    Signed(SignedMeasureRuleFile),
    Dt(DtRuleFile),
}

impl RuleFile {
    pub fn parse(text: &str) -> Result<RuleFile> {
        let value: Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("rule file must be a JSON object".into()))?;
        let has = |k: &str| obj.contains_key(k);
        Ok(if has("S") {
            RuleFile::Lifted(serde_json::from_value(value)?)
        } else if has("S_tilde") {
            RuleFile::Signed(serde_json::from_value(value)?)
        } else if has("Q") {
            RuleFile::Dt(serde_json::from_value(value)?)
        } else if has("L") && has("points") {
            RuleFile::Ct(serde_json::from_value(value)?)
        } else {
            return Err(Error::InvalidArgument(
                "unrecognised rule file: expected keys S, S_tilde, Q, or L with points".into(),
            ));
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RuleFile::Ct(_) => "ct",
            RuleFile::Lifted(_) => "lifted",
            RuleFile::Signed(_) => "signed",
            RuleFile::Dt(_) => "dt",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            RuleFile::Ct(r) => to_json(r),
            RuleFile::Lifted(r) => to_json(r),
            RuleFile::Signed(r) => to_json(r),
            RuleFile::Dt(r) => to_json(r),
        }
    }
}

/// User-supplied real Jordan structure for `G^T`.
#[derive(Clone, Debug, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JordanOverride {
    pub blocks: Vec<BlockSpec>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
}

impl JordanOverride {
    pub fn apply(&self, m: &Matrix, tol: &Tolerances) -> Result<SpectralInfo> {
        spectral_with_structure(m, &self.blocks, matrix(&self.v, "V")?, tol)
    }
}

/// JSON view of a [`SpectralInfo`].
#[derive(Clone, Debug, SerializeDerive)]
pub struct SpectralView {
    /// `[re, im]` pairs, one per distinct eigenvalue (conjugates listed once).
    pub eigenvalues: Vec<[f64; 2]>,
    pub blocks: Vec<JordanBlock>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub residual: f64,
}

impl From<&SpectralInfo> for SpectralView {
    fn from(info: &SpectralInfo) -> Self {
        SpectralView {
            eigenvalues: info.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            blocks: info.blocks.clone(),
            v: to_rows(&info.v),
            residual: info.residual,
        }
    }
}
