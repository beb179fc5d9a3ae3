//! Study-level effect construction and dataset parsing.
//!
//! Every study ends up as a log-odds-ratio `y` with a sampling standard
//! deviation `sigma`. Rows may arrive in one of three forms:
//!
//! * `y` + `se` given directly,
//! * a published `estimate` with a confidence interval (`ci_lower`,
//!   `ci_upper`, optional `ci_level`, default 0.95),
//! * a 2×2 table of counts `a`, `b` (events / non-events, exposed) and
//!   `c`, `d` (events / non-events, unexposed).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal::two_sided_z;

pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("count `{cell}` is negative or not finite ({value})")]
    InvalidCount { cell: Cell, value: f64 },
    #[error("cell `{cell}` is zero and no continuity correction was requested")]
    ZeroCell { cell: Cell },
    #[error("confidence interval upper bound {upper} is not above lower bound {lower}")]
    InvertedInterval { lower: f64, upper: f64 },
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("no studies")]
    NoStudies,
    #[error("duplicate study label `{0}`")]
    DuplicateLabel(String),
    #[error("more than one study is flagged as target (`{0}` and `{1}`)")]
    MultipleTargets(String, String),
    #[error("no study labelled `{0}`")]
    UnknownTarget(String),
    #[error("study `{label}`: {what}")]
    InvalidStudy { label: String, what: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// Names the four cells of a [`TwoByTwo`] table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    EventsExposed,
    NonEventsExposed,
    EventsUnexposed,
    NonEventsUnexposed,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cell::EventsExposed => "a (events, exposed)",
            Cell::NonEventsExposed => "b (non-events, exposed)",
            Cell::EventsUnexposed => "c (events, unexposed)",
            Cell::NonEventsUnexposed => "d (non-events, unexposed)",
        })
    }
}

/// Event counts for an exposed and an unexposed subgroup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoByTwo {
    pub events_exposed: f64,
    pub nonevents_exposed: f64,
    pub events_unexposed: f64,
    pub nonevents_unexposed: f64,
}

impl TwoByTwo {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, IngestError> {
        let table = TwoByTwo {
            events_exposed: a,
            nonevents_exposed: b,
            events_unexposed: c,
            nonevents_unexposed: d,
        };
        for (cell, value) in table.cells() {
            if !value.is_finite() || value < 0.0 {
                return Err(IngestError::InvalidCount { cell, value });
            }
        }
        Ok(table)
    }

    fn cells(&self) -> [(Cell, f64); 4] {
        [
            (Cell::EventsExposed, self.events_exposed),
            (Cell::NonEventsExposed, self.nonevents_exposed),
            (Cell::EventsUnexposed, self.events_unexposed),
            (Cell::NonEventsUnexposed, self.nonevents_unexposed),
        ]
    }

    /// The table with its two rows (exposed / unexposed) exchanged.
    pub fn swap_rows(&self) -> Self {
        TwoByTwo {
            events_exposed: self.events_unexposed,
            nonevents_exposed: self.nonevents_unexposed,
            events_unexposed: self.events_exposed,
            nonevents_unexposed: self.nonevents_exposed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuityCorrection {
    None,
    /// Add 0.5 to all four cells iff any cell is zero.
    #[default]
    HalvesIfAnyZeroCell,
}

/// An effect estimate together with its sampling standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effect {
    pub y: f64,
    pub sigma: f64,
}

/// Woolf log odds ratio with its standard error.
pub fn log_odds_ratio(table: &TwoByTwo, correction: ContinuityCorrection) -> Result<Effect, IngestError> {
    // Re-validate: fields are public.
    let table = TwoByTwo::new(
        table.events_exposed,
        table.nonevents_exposed,
        table.events_unexposed,
        table.nonevents_unexposed,
    )?;
    let zero = table.cells().into_iter().find(|(_, v)| *v == 0.0);
    let shift = match (zero, correction) {
        (None, _) => 0.0,
        (Some((cell, _)), ContinuityCorrection::None) => return Err(IngestError::ZeroCell { cell }),
        (Some(_), ContinuityCorrection::HalvesIfAnyZeroCell) => 0.5,
    };
    let [a, b, c, d] = table.cells().map(|(_, v)| v + shift);
    Ok(Effect {
        y: (a.ln() + d.ln()) - (b.ln() + c.ln()),
        sigma: (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiReconstruction {
    pub sigma: f64,
    pub midpoint: f64,
}

/// Recovers the standard deviation behind a symmetric normal interval.
pub fn sigma_from_ci(lower: f64, upper: f64, level: f64) -> Result<CiReconstruction, IngestError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(IngestError::InvalidLevel(level));
    }
    if !(lower.is_finite() && upper.is_finite()) || upper <= lower {
        return Err(IngestError::InvertedInterval { lower, upper });
    }
    Ok(CiReconstruction {
        sigma: (upper - lower) / (2.0 * two_sided_z(level)),
        midpoint: 0.5 * (upper + lower),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub label: String,
    pub y: f64,
    pub sigma: f64,
    #[serde(default)]
    pub is_target: bool,
}

impl Study {
    pub fn new(label: impl Into<String>, y: f64, sigma: f64) -> Self {
        Study {
            label: label.into(),
            y,
            sigma,
            is_target: false,
        }
    }

    pub fn target(mut self) -> Self {
        self.is_target = true;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectScale {
    #[default]
    LogOddsRatio,
}

/// A validated, ordered collection of studies on the log-OR scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    studies: Vec<Study>,
    effect_scale: EffectScale,
}

impl Dataset {
    /// Validates studies; order is preserved. Empty labels are allowed and
    /// exempt from the uniqueness check.
    pub fn new(studies: Vec<Study>) -> Result<Self, IngestError> {
        if studies.is_empty() {
            return Err(IngestError::NoStudies);
        }
        let mut seen = HashSet::new();
        let mut target: Option<&str> = None;
        for s in &studies {
            if !s.y.is_finite() {
                return Err(IngestError::InvalidStudy {
                    label: s.label.clone(),
                    what: format!("effect {} is not finite", s.y),
                });
            }
            if !(s.sigma.is_finite() && s.sigma > 0.0) {
                return Err(IngestError::InvalidStudy {
                    label: s.label.clone(),
                    what: format!("standard deviation {} must be positive and finite", s.sigma),
                });
            }
            if !s.label.is_empty() && !seen.insert(s.label.as_str()) {
                return Err(IngestError::DuplicateLabel(s.label.clone()));
            }
            if s.is_target {
                if let Some(prev) = target {
                    return Err(IngestError::MultipleTargets(prev.to_owned(), s.label.clone()));
                }
                target = Some(&s.label);
            }
        }
        Ok(Dataset {
            studies,
            effect_scale: EffectScale::LogOddsRatio,
        })
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn effect_scale(&self) -> EffectScale {
        self.effect_scale
    }

    pub fn target_index(&self) -> Option<usize> {
        self.studies.iter().position(|s| s.is_target)
    }

    /// Moves the target flag to the study with the given label.
    pub fn with_target(mut self, label: &str) -> Result<Self, IngestError> {
        let idx = self
            .studies
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| IngestError::UnknownTarget(label.to_owned()))?;
        for (j, s) in self.studies.iter_mut().enumerate() {
            s.is_target = j == idx;
        }
        Ok(self)
    }

    /// Dataset with study `i` removed, or `None` if it would be empty.
    pub fn without(&self, i: usize) -> Option<Dataset> {
        if self.studies.len() <= 1 || i >= self.studies.len() {
            return None;
        }
        let mut studies = self.studies.clone();
        studies.remove(i);
        Some(Dataset {
            studies,
            effect_scale: self.effect_scale,
        })
    }

    pub(crate) fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|s| s.y)
    }

    pub(crate) fn sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|s| s.sigma)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigmas().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub correction: ContinuityCorrection,
}

const COLUMNS: [&str; 12] = [
    "label", "y", "se", "estimate", "ci_lower", "ci_upper", "ci_level", "a", "b", "c", "d", "target",
];

/// One input row with blank cells removed.
type RawRow = BTreeMap<String, String>;

fn numeric(row: &RawRow, key: &str, n: usize) -> Result<Option<f64>, IngestError> {
    match row.get(key) {
        None => Ok(None),
        Some(s) => s.parse::<f64>().map(Some).map_err(|_| IngestError::Row {
            row: n,
            message: format!("column `{key}`: `{s}` is not a number"),
        }),
    }
}

fn parse_target(row: &RawRow, n: usize) -> Result<bool, IngestError> {
    match row.get("target").map(|s| s.to_ascii_lowercase()) {
        None => Ok(false),
        Some(s) => match s.as_str() {
            "0" | "false" | "no" => Ok(false),
            "1" | "true" | "yes" | "target" => Ok(true),
            _ => Err(IngestError::Row {
                row: n,
                message: format!("column `target`: expected 0 or 1, got `{s}`"),
            }),
        },
    }
}

fn resolve_row(row: &RawRow, n: usize, opts: &ParseOptions) -> Result<Study, IngestError> {
    let row_err = |message: String| IngestError::Row { row: n, message };
    for key in row.keys() {
        if !COLUMNS.contains(&key.as_str()) {
            return Err(row_err(format!("unknown column `{key}`")));
        }
    }
    let forms: [(&str, &[&str], &[&str]); 3] = [
        ("y+se", &["y", "se"], &[]),
        (
            "estimate+ci",
            &["estimate", "ci_lower", "ci_upper"],
            &["ci_level"],
        ),
        ("2x2 counts", &["a", "b", "c", "d"], &[]),
    ];
    let mut complete = Vec::new();
    for (name, required, optional) in forms {
        let present = required.iter().filter(|k| row.contains_key(**k)).count();
        let touched = present > 0 || optional.iter().any(|k| row.contains_key(*k));
        if present == required.len() {
            complete.push(name);
        } else if touched {
            let missing: Vec<_> = required.iter().filter(|k| !row.contains_key(**k)).collect();
            return Err(row_err(format!("incomplete {name} form, missing {missing:?}")));
        }
    }
    let form = match complete.as_slice() {
        [one] => *one,
        [] => {
            return Err(row_err(
                "no effect given (need y+se, estimate+ci, or 2x2 counts)".into(),
            ))
        }
        many => return Err(row_err(format!("ambiguous row: several forms given {many:?}"))),
    };
    let num = |k: &str| numeric(row, k, n).map(|v| v.expect("checked present"));
    let effect = match form {
        "y+se" => Effect {
            y: num("y")?,
            sigma: num("se")?,
        },
        "estimate+ci" => {
            let level = numeric(row, "ci_level", n)?.unwrap_or(DEFAULT_CI_LEVEL);
            let ci = sigma_from_ci(num("ci_lower")?, num("ci_upper")?, level)
                .map_err(|e| row_err(e.to_string()))?;
            Effect {
                y: num("estimate")?,
                sigma: ci.sigma,
            }
        }
        _ => {
            let table = TwoByTwo::new(num("a")?, num("b")?, num("c")?, num("d")?)
                .map_err(|e| row_err(e.to_string()))?;
            log_odds_ratio(&table, opts.correction).map_err(|e| row_err(e.to_string()))?
        }
    };
    if !(effect.sigma.is_finite() && effect.sigma > 0.0) {
        return Err(row_err(format!(
            "standard error {} must be positive",
            effect.sigma
        )));
    }
    if !effect.y.is_finite() {
        return Err(row_err(format!("effect {} is not finite", effect.y)));
    }
    Ok(Study {
        label: row.get("label").cloned().unwrap_or_default(),
        y: effect.y,
        sigma: effect.sigma,
        is_target: parse_target(row, n)?,
    })
}

fn assemble(rows: Vec<RawRow>, opts: &ParseOptions) -> Result<Dataset, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::NoStudies);
    }
    let studies = rows
        .iter()
        .enumerate()
        .map(|(j, r)| resolve_row(r, j + 1, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(studies)
}

/// Parses the CSV schema. Rows are numbered from 1, excluding the header.
pub fn parse_csv<R: Read>(reader: R, opts: &ParseOptions) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Malformed(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(IngestError::NoStudies);
    }
    let mut rows = Vec::new();
    for (j, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Row {
            row: j + 1,
            message: e.to_string(),
        })?;
        let row: RawRow = headers
            .iter()
            .zip(rec.iter())
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect();
        rows.push(row);
    }
    assemble(rows, opts)
}

/// Parses the JSON mirror: an array of objects keyed like the CSV columns.
pub fn parse_json(text: &str, opts: &ParseOptions) -> Result<Dataset, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::NoStudies);
    }
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let arr = value
        .as_array()
        .ok_or_else(|| IngestError::Malformed("expected a JSON array of rows".into()))?;
    let mut rows = Vec::with_capacity(arr.len());
    for (j, item) in arr.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| IngestError::Row {
            row: j + 1,
            message: "expected an object".into(),
        })?;
        let mut row = RawRow::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) if s.trim().is_empty() => continue,
                serde_json::Value::String(s) => s.trim().to_owned(),
                serde_json::Value::Bool(b) => (if *b { "1" } else { "0" }).to_owned(),
                serde_json::Value::Number(x) => x.to_string(),
                other => {
                    return Err(IngestError::Row {
                        row: j + 1,
                        message: format!("column `{k}`: unsupported value {other}"),
                    })
                }
            };
            row.insert(k.clone(), s);
        }
        rows.push(row);
    }
    assemble(rows, opts)
}

/// Reads a dataset from disk; `.json` files use the JSON mirror, anything
/// else is treated as CSV.
pub fn parse_dataset(path: &Path, opts: &ParseOptions) -> Result<Dataset, IngestError> {
    let io_err = |e: std::io::Error| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_json(&text, opts)
    } else {
        parse_csv(text.as_bytes(), opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<Dataset, IngestError> {
        parse_csv(text.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn symmetric_table_has_unit_odds_ratio() {
        let t = TwoByTwo::new(10.0, 10.0, 10.0, 10.0).unwrap();
        let e = log_odds_ratio(&t, ContinuityCorrection::None).unwrap();
        assert_eq!(e.y, 0.0);
        assert!((e.sigma - 0.4_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn woolf_formula_by_hand() {
        let t = TwoByTwo::new(20.0, 10.0, 10.0, 20.0).unwrap();
        let e = log_odds_ratio(&t, ContinuityCorrection::None).unwrap();
        assert!((e.y - 4.0_f64.ln()).abs() < 1e-14);
        assert!((e.sigma - 0.3_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_cell_corrected() {
        let t = TwoByTwo::new(5.0, 0.0, 3.0, 7.0).unwrap();
        let e = log_odds_ratio(&t, ContinuityCorrection::HalvesIfAnyZeroCell).unwrap();
        let expect_y = ((5.5 * 7.5) / (0.5 * 3.5_f64)).ln();
        let expect_s = (1.0 / 5.5 + 1.0 / 0.5 + 1.0 / 3.5 + 1.0 / 7.5_f64).sqrt();
        assert!((e.y - expect_y).abs() < 1e-14);
        assert!((e.sigma - expect_s).abs() < 1e-14);
    }

    #[test]
    fn correction_leaves_complete_tables_alone() {
        let t = TwoByTwo::new(20.0, 10.0, 10.0, 20.0).unwrap();
        let a = log_odds_ratio(&t, ContinuityCorrection::None).unwrap();
        let b = log_odds_ratio(&t, ContinuityCorrection::HalvesIfAnyZeroCell).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_cell_without_correction_names_cell() {
        let t = TwoByTwo::new(5.0, 0.0, 3.0, 7.0).unwrap();
        let err = log_odds_ratio(&t, ContinuityCorrection::None).unwrap_err();
        assert_eq!(
            err,
            IngestError::ZeroCell {
                cell: Cell::NonEventsExposed
            }
        );
        assert!(err.to_string().contains("non-events, exposed"));
    }

    #[test]
    fn negative_count_rejected() {
        assert!(matches!(
            TwoByTwo::new(1.0, -2.0, 3.0, 4.0),
            Err(IngestError::InvalidCount { .. })
        ));
        let t = TwoByTwo {
            events_exposed: 1.0,
            nonevents_exposed: 1.0,
            events_unexposed: -1.0,
            nonevents_unexposed: 1.0,
        };
        assert!(log_odds_ratio(&t, ContinuityCorrection::HalvesIfAnyZeroCell).is_err());
    }

    #[test]
    fn sigma_from_published_interval() {
        let r = sigma_from_ci(2.686, 4.289, 0.95).unwrap();
        assert!((r.sigma - 0.4089).abs() < 5e-5);
        assert!((r.midpoint - 3.488).abs() < 1e-3);
        let r = sigma_from_ci(-1.959_963_984_540_054, 1.959_963_984_540_054, 0.95).unwrap();
        assert!((r.sigma - 1.0).abs() < 1e-12);
        let r = sigma_from_ci(0.049, 1.340, 0.95).unwrap();
        assert!((r.sigma - 0.32934).abs() < 1e-5);
    }

    #[test]
    fn sigma_from_ci_rejects_bad_input() {
        assert!(matches!(
            sigma_from_ci(1.0, 1.0, 0.95),
            Err(IngestError::InvertedInterval { .. })
        ));
        assert!(matches!(
            sigma_from_ci(2.0, 1.0, 0.95),
            Err(IngestError::InvertedInterval { .. })
        ));
        assert!(matches!(
            sigma_from_ci(0.0, 1.0, 1.0),
            Err(IngestError::InvalidLevel(_))
        ));
    }

    #[test]
    fn single_target_row() {
        let d = csv("label,y,se,target\nindex_study,3.488,0.409,target\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.target_index(), Some(0));
        assert_eq!(d.studies()[0].y, 3.488);
    }

    #[test]
    fn empty_file_has_no_studies() {
        assert_eq!(csv(""), Err(IngestError::NoStudies));
        assert_eq!(csv("label,y,se\n"), Err(IngestError::NoStudies));
        assert_eq!(
            parse_json("[]", &ParseOptions::default()),
            Err(IngestError::NoStudies)
        );
    }

    #[test]
    fn inverted_ci_names_row() {
        let err = csv("label,estimate,ci_lower,ci_upper\nok,1,0.5,1.5\nbad,1,2,0.5\n").unwrap_err();
        match err {
            IngestError::Row { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn mixed_forms_across_rows() {
        let text = "label,y,se,estimate,ci_lower,ci_upper,ci_level,a,b,c,d,target\n\
                    s1,0.2,0.1,,,,,,,,,0\n\
                    s2,,,0.5,0.1,0.9,0.9,,,,,0\n\
                    s3,,,,,,,20,10,10,20,1\n";
        let d = csv(text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.target_index(), Some(2));
        assert!((d.studies()[1].sigma - 0.8 / (2.0 * 1.644_853_626_951_472_2)).abs() < 1e-12);
        assert!((d.studies()[2].y - 4.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_or_multiple_forms_rejected() {
        assert!(matches!(
            csv("label,y,se,a,b,c,d\nx,,,,,,\n"),
            Err(IngestError::Row { row: 1, .. })
        ));
        assert!(matches!(
            csv("label,y,se,a,b,c,d\nx,1,1,1,1,1,1\n"),
            Err(IngestError::Row { row: 1, .. })
        ));
        assert!(matches!(
            csv("label,y,se\nx,1,\n"),
            Err(IngestError::Row { row: 1, .. })
        ));
    }

    #[test]
    fn duplicate_labels_and_targets_rejected() {
        assert_eq!(
            csv("label,y,se\nx,1,1\nx,2,1\n"),
            Err(IngestError::DuplicateLabel("x".into()))
        );
        assert!(matches!(
            csv("label,y,se,target\nx,1,1,1\nz,2,1,1\n"),
            Err(IngestError::MultipleTargets(..))
        ));
    }

    #[test]
    fn json_mirror_matches_csv() {
        let from_csv = csv("label,y,se,target\na,0.5,0.2,0\nb,1.5,0.3,1\n").unwrap();
        let from_json = parse_json(
            r#"[{"label":"a","y":0.5,"se":0.2,"target":0},
                {"label":"b","y":"1.5","se":0.3,"target":true,"ci_lower":null}]"#,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(from_csv, from_json);
    }

    #[test]
    fn target_override() {
        let d = csv("label,y,se,target\na,0.5,0.2,1\nb,1.5,0.3,0\n").unwrap();
        let d = d.with_target("b").unwrap();
        assert_eq!(d.target_index(), Some(1));
        assert!(d.clone().with_target("zzz").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn swapping_rows_negates_log_or(a in 0u32..200, b in 0u32..200, c in 0u32..200, d in 0u32..200) {
                let t = TwoByTwo::new(a as f64, b as f64, c as f64, d as f64).unwrap();
                let e = log_odds_ratio(&t, ContinuityCorrection::HalvesIfAnyZeroCell).unwrap();
                let s = log_odds_ratio(&t.swap_rows(), ContinuityCorrection::HalvesIfAnyZeroCell).unwrap();
                prop_assert!((e.y + s.y).abs() < 1e-12);
                prop_assert!((e.sigma - s.sigma).abs() < 1e-12);
            }

            #[test]
            fn ci_reconstruction_is_identity(mean in -10.0..10.0f64, sigma in 1e-3..10.0f64, level in 0.5..0.999f64) {
                let z = two_sided_z(level);
                let r = sigma_from_ci(mean - z * sigma, mean + z * sigma, level).unwrap();
                prop_assert!((r.sigma - sigma).abs() < 1e-10 * sigma.max(1.0));
                prop_assert!((r.midpoint - mean).abs() < 1e-10 * mean.abs().max(1.0));
            }

            #[test]
            fn parsing_preserves_order(ys in proptest::collection::vec(-5.0..5.0f64, 1..20)) {
                let mut text = String::from("label,y,se\n");
                for (j, y) in ys.iter().enumerate() {
                    text.push_str(&format!("s{j},{y},0.5\n"));
                }
                let a = csv(&text).unwrap();
                let b = csv(&text).unwrap();
                prop_assert_eq!(&a, &b);
                let got: Vec<f64> = a.studies().iter().map(|s| s.y).collect();
                prop_assert_eq!(got, ys);
            }
        }
    }
}
